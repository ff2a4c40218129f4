void store(int i)
{
    char buf[16];
    buf[i] = 0; // TRIGGER
}
