int average(int sum, int cnt)
{
    if (cnt == 0)
        return 0;
    return sum / cnt; // TRIGGER
}
