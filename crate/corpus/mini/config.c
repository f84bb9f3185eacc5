#include <stddef.h>
#include "util.h"

struct config {
    int port;
    int verbose;
    char host[64];
};

static int in_range(int value, int lo, int hi) {
    if (value < lo) {
        return 0;
    }
    if (value > hi) {
        return 0;
    }
    return 1;
}

int config_set(struct config *cfg, const char *key, const char *raw) {
    int n;

    if (key[0] == 'p') {
        n = parse_num(raw);
        if (!in_range(n, 1, 65535)) {
            return -1;
        }
        cfg->port = n;
        return 0;
    }
    if (key[0] == 'v') {
        n = parse_num(raw);
        cfg->verbose = n > 0;
        return 0;
    }
    if (key[0] == 'h') {
        copy_str(cfg->host, sizeof(cfg->host), raw);
        return 0;
    }
    return -1;
}
