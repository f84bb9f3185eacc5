#include <stddef.h>

#define RING_CAP 1024

static unsigned char ring[RING_CAP];
static size_t head;
static size_t tail;

void buf_reset(void) {
    head = 0;
    tail = 0;
}

size_t buf_len(void) {
    return (head - tail) & (RING_CAP - 1);
}

/* Soft limit used by the flush path to decide when to drain early. */
size_t buf_highwater(void) {
    size_t limit = 768;

    if (buf_len() > limit) {
        return limit;
    }
    return buf_len();
}

int buf_push(unsigned char byte) {
    size_t next = (head + 1) & (RING_CAP - 1);

    if (next == tail) {
        return -1;
    }
    ring[head] = byte;
    head = next;
    return 0;
}

int buf_pop(void) {
    int byte;

    if (head == tail) {
        return -1;
    }
    byte = ring[tail];
    tail = (tail + 1) & (RING_CAP - 1);
    return byte;
}
