int table_get(int *tab, int idx)
{
    return tab[idx]; // TRIGGER
}
