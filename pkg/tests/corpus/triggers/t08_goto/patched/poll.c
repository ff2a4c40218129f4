int poll_dev(int *st)
{
    int tries = 0;
again:
    tries++;
    if (tries > 5)
        return -1;
    if (*st == 0)
        goto again; // TRIGGER
    return 0;
}
