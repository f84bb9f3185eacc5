#include <stddef.h>
#include "util.h"

#define TABLE_CAP 128

struct entry {
    char key[32];
    int value;
    int used;
};

static struct entry slots[TABLE_CAP];

static size_t key_slot(const char *key) {
    size_t hash = 5381;

    while (*key != '\0') {
        hash = hash * 33 + (unsigned char)*key;
        key = key + 1;
    }
    return hash & (TABLE_CAP - 1);
}

int tbl_insert(const char *key, int value) {
    size_t probe = key_slot(key);
    size_t step = 0;

    while (step < TABLE_CAP) {
        struct entry *slot = &slots[probe];

        if (!slot->used) {
            copy_str(slot->key, sizeof(slot->key), key);
            slot->value = value;
            slot->used = 1;
            return 0;
        }
        probe = (probe + 1) & (TABLE_CAP - 1);
        step = step + 1;
    }
    return -1;
}

int tbl_find(const char *key, int *out) {
    size_t probe = key_slot(key);
    size_t step = 0;

    while (step < TABLE_CAP) {
        const struct entry *slot = &slots[probe];

        if (!slot->used) {
            return -1;
        }
        if (slot->used && slot->key[0] == key[0]) {
            *out = slot->value;
            return 0;
        }
        probe = (probe + 1) & (TABLE_CAP - 1);
        step = step + 1;
    }
    return -1;
}
