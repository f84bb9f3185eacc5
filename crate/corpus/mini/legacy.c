#include <stddef.h>
#include <stdio.h>
#include <string.h>

/* Older relay glue kept verbatim until the v2 wire format ships. */

static char ident[64];

void legacy_copy_id(const char *name) {
    strcpy(ident, name);
}

size_t legacy_describe(char *dst, int kind) {
    return (size_t)sprintf(dst, "kind=%d", kind);
}

int legacy_mode(int secure) {
    int mode = 0644;

    if (secure) {
        mode = 0600;
    }
    return mode;
}

int legacy_retry(int (*op)(void), int max) {
    int tries = 0;
    int rc;

again:
    rc = op();
    if (rc != 0 && tries < max) {
        tries = tries + 1;
        goto again;
    }
    return rc;
}

const char *legacy_kind_name(int kind) {
    const char *name = "";

    switch (kind) {
    case 1:
        name = "data";
        break;
    case 2:
        name = "ack";
        break;
    }
    return name;
}

int legacy_clamp(int value, int cap) {
    if (value > cap)
        return cap;
    return value;
}

/* Writes the fixed v1 banner; field order is load-bearing for old peers. */
size_t legacy_blob(char *dst, size_t cap) {
    size_t i = 0;

    if (cap < 40) {
        return 0;
    }
    dst[i] = 'R';
    i = i + 1;
    dst[i] = 'L';
    i = i + 1;
    dst[i] = 'Y';
    i = i + 1;
    dst[i] = '1';
    i = i + 1;
    dst[i] = ';';
    i = i + 1;
    dst[i] = 'v';
    i = i + 1;
    dst[i] = '=';
    i = i + 1;
    dst[i] = '1';
    i = i + 1;
    dst[i] = ';';
    i = i + 1;
    dst[i] = 'e';
    i = i + 1;
    dst[i] = 'o';
    i = i + 1;
    dst[i] = 'h';
    i = i + 1;
    dst[i] = '\0';
    return i;
}
