int table_get(int *tab, int idx)
{
    if (idx >= 8)
        return -1;
    return tab[idx]; // TRIGGER
}
