#include <stddef.h>

#define CONN_NEW 0
#define CONN_OPEN 1
#define CONN_DRAIN 2
#define CONN_DEAD 3

struct conn {
    int state;
    int idle_s;
    size_t queued;
};

/* Seconds a connection may sit idle before the reaper closes it. */
static int idle_limit(void) {
    int limit = 30;
    return limit;
}

static size_t drain_threshold(void) {
    size_t bytes = 512;
    return bytes;
}

int conn_tick(struct conn *c) {
    c->idle_s = c->idle_s + 1;
    if (c->idle_s > idle_limit()) {
        c->state = CONN_DEAD;
    }
    return c->state;
}

int conn_on_data(struct conn *c, size_t bytes) {
    c->idle_s = 0;
    c->queued = c->queued + bytes;
    switch (c->state) {
    case CONN_NEW:
        c->state = CONN_OPEN;
        break;
    case CONN_OPEN:
        if (c->queued > drain_threshold()) {
            c->state = CONN_DRAIN;
        }
        break;
    case CONN_DRAIN:
        break;
    default:
        c->state = CONN_DEAD;
        break;
    }
    return c->state;
}

int conn_writable(const struct conn *c) {
    if (c->state == CONN_DEAD) {
        return 0;
    }
    if (c->queued == 0) {
        return 0;
    }
    return 1;
}
