int parse_block(int n)
{
    char *buf = malloc(n);
    if (n > 4) {
        free(buf);
        return -1; // TRIGGER
    }
    free(buf);
    return 0;
}
