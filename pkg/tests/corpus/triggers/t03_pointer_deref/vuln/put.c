void put_byte(char *p, char *end)
{
    *p = 0; // TRIGGER
}
