struct node {
    struct node *next;
};

int walk(struct node *nd, int depth)
{
    if (depth > 64)
        return -1;
    if (nd == NULL)
        return 0;
    return walk(nd->next, depth + 1); // TRIGGER
}
