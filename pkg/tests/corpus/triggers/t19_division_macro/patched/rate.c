#define PER(a, b) ((a) / (b))

int rate(int bytes, int secs)
{
    if (secs == 0)
        return 0;
    return PER(bytes, secs); // TRIGGER
}
