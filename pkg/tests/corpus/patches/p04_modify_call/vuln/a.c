void copy(char *d, char *s, int n)
{
    memcpy(d, s, n); // TRIGGER
}
