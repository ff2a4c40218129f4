int item(int *v, int i)
{
    return v[i]; // TRIGGER
}
