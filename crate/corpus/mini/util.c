#include "util.h"

/* Bounded copy; dst is always terminated when cap > 0. */
size_t copy_str(char *dst, size_t cap, const char *src) {
    size_t i = 0;

    if (cap == 0) {
        return 0;
    }
    while (src[i] != '\0' && i + 1 < cap) {
        dst[i] = src[i];
        i = i + 1;
    }
    dst[i] = '\0';
    return i;
}

/* Unsigned decimal parse; returns -1 on empty input or any bad digit. */
int parse_num(const char *s) {
    int value = 0;

    if (s == 0 || *s == '\0') {
        return -1;
    }
    while (*s != '\0') {
        if (*s < '0' || *s > '9') {
            return -1;
        }
        value = value * 10 + (*s - '0');
        s = s + 1;
    }
    return value;
}

/* Renders "label=value" into dst; returns the rendered length. */
size_t format_len(char *dst, size_t cap, const char *label, int value) {
    char digits[12];
    size_t n = 0, i;
    int v = value;

    if (v < 0) {
        v = -v;
    }
    do {
        digits[n] = (char)('0' + (v % 10));
        n = n + 1;
        v = v / 10;
    } while (v > 0);
    i = copy_str(dst, cap, label);
    if (i + 1 < cap) {
        dst[i] = '=';
        i = i + 1;
    }
    if (value < 0 && i + 1 < cap) {
        dst[i] = '-';
        i = i + 1;
    }
    while (n > 0 && i + 1 < cap) {
        n = n - 1;
        dst[i] = digits[n];
        i = i + 1;
    }
    dst[i] = '\0';
    return i;
}
