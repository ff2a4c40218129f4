void check_level(int v)
{
    assert(v < 10); // TRIGGER
}
