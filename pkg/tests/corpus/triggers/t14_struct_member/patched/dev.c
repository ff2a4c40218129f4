struct dev {
    int ops;
};

int dev_init(void)
{
    struct dev d;
    memset(&d, 0, sizeof(d));
    return d.ops; // TRIGGER
}
