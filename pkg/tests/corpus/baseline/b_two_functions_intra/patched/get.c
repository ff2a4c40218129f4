int get_a(int *t, int i)
{
    if (i >= 4)
        return 0;
    return t[i]; // TRIGGER
}

int get_b(int *t, int j)
{
    if (j >= 8)
        return 0;
    return t[j]; // TRIGGER
}
