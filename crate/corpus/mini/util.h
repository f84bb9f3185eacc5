#ifndef RELAY_UTIL_H
#define RELAY_UTIL_H

#include <stddef.h>

size_t copy_str(char *dst, size_t cap, const char *src);
int parse_num(const char *s);
size_t format_len(char *dst, size_t cap, const char *label, int value);

#endif
