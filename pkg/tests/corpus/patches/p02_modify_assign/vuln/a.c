int grow(int a)
{
    int x;
    x = a;
    return x * 2; // TRIGGER
}
