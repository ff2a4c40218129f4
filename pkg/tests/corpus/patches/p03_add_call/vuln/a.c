int read_at(char *buf, int len)
{
    return buf[len]; // TRIGGER
}
