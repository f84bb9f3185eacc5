#include <stddef.h>
#include "util.h"

#define LOG_DEBUG 0
#define LOG_INFO 1
#define LOG_ERROR 2

static int log_floor = LOG_INFO;
static int dropped;

const char *level_name(int level) {
    switch (level) {
    case LOG_DEBUG:
        return "debug";
    case LOG_INFO:
        return "info";
    case LOG_ERROR:
        return "error";
    default:
        return "unknown";
    }
}

void log_set_floor(int level) {
    if (level < LOG_DEBUG) {
        level = LOG_DEBUG;
    }
    if (level > LOG_ERROR) {
        level = LOG_ERROR;
    }
    log_floor = level;
}

size_t log_counter_line(char *dst, size_t cap, int level) {
    if (level < log_floor) {
        dropped = dropped + 1;
        return 0;
    }
    return format_len(dst, cap, level_name(level), dropped);
}
