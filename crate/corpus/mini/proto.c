#include <stddef.h>
#include "util.h"

#define PROTO_IDLE 0
#define PROTO_HELLO 1
#define PROTO_READY 2
#define PROTO_CLOSED 3

static int proto_state = PROTO_IDLE;
static int hello_retries;

int proto_step(int event) {
    int next = proto_state;

    switch (proto_state) {
    case PROTO_IDLE:
        if (event == 1) {
            next = PROTO_HELLO;
        }
        break;
    case PROTO_HELLO:
        if (event == 2) {
            next = PROTO_READY;
        }
        break;
    case PROTO_READY:
        if (event == 3) {
            next = PROTO_CLOSED;
        }
        break;
    default:
        next = PROTO_CLOSED;
        break;
    }
    proto_state = next;
    return next;
}

size_t proto_describe(char *dst, size_t cap) {
    return format_len(dst, cap, "state", proto_state);
}

int proto_handshake(int attempts) {
    char line[48];
    int i = 0;

    hello_retries = 0;
    while (i < attempts) {
        if (proto_step(1) == PROTO_HELLO) {
            hello_retries = hello_retries + 1;
        }
        if (proto_step(2) == PROTO_READY) {
            format_len(line, sizeof(line), "retries", hello_retries);
            return hello_retries;
        }
        i = i + 1;
    }
    return -1;
}
