void log_open(const char *path)
{
    int fd = open(path, 0);
    write(fd, "x", 1); // TRIGGER
}
