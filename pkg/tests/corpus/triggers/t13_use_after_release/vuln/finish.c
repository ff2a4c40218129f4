struct buf {
    char *data;
};
struct conn {
    struct buf *out;
};

void finish(struct conn *cn)
{
    struct buf *b = cn->out;
    put_buf(b);
    send_data(b->data); // TRIGGER
}
