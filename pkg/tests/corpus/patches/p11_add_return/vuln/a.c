int peek(int *v, int i, int err)
{
    if (err)
        return v[i]; // TRIGGER
    return 0;
}
