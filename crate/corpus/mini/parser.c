#include <stddef.h>
#include "util.h"

#define FRAME_DATA 1
#define FRAME_ACK 2
#define FRAME_CLOSE 3

struct frame {
    int kind;
    int length;
    char name[64];
};

/* Max payload the wire format can describe in its two length bytes. */
static int max_payload(void) {
    int limit = 65535;
    return limit;
}

int parse_header(const unsigned char *raw, struct frame *out) {
    int length;

    if (raw == 0 || out == 0) {
        return -1;
    }
    out->kind = raw[0];
    length = (raw[1] << 8) | raw[2];
    if (length > max_payload()) {
        return -1;
    }
    out->length = length;
    return 0;
}

int frame_cost(const struct frame *f) {
    int base = 256;

    switch (f->kind) {
    case FRAME_DATA:
        return base + f->length;
    case FRAME_ACK:
        return base;
    case FRAME_CLOSE:
        return 0;
    default:
        return -1;
    }
}

int parse_frame(const unsigned char *raw, size_t len, struct frame *out) {
    if (len < 3) {
        return -1;
    }
    if (parse_header(raw, out) != 0) {
        return -1;
    }
    if (out->kind == FRAME_DATA && out->length == 0) {
        return -1;
    }
    copy_str(out->name, sizeof(out->name), (const char *)raw + 3);
    return out->kind;
}
