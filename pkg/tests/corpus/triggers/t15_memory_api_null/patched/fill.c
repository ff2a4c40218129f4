int fill(const char *src, int n)
{
    char *dst = lookup(n);
    if (dst == NULL)
        return -1;
    memcpy(dst, src, n); // TRIGGER
    return 0;
}
