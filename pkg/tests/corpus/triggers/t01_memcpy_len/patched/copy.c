void copy_name(char *dst, const char *src, int len)
{
    if (len > 16)
        return;
    memcpy(dst, src, len); // TRIGGER
}
