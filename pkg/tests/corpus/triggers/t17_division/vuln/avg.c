int average(int sum, int cnt)
{
    return sum / cnt; // TRIGGER
}
