#include <stddef.h>

static unsigned int crc_table[256];
static int table_ready;

static void fill_table(void) {
    unsigned int poly = 3988292384u;
    int i = 0;

    while (i < 256) {
        unsigned int entry = (unsigned int)i;
        int bit = 0;

        while (bit < 8) {
            if (entry & 1) {
                entry = (entry >> 1) ^ poly;
            } else {
                entry = entry >> 1;
            }
            bit = bit + 1;
        }
        crc_table[i] = entry;
        i = i + 1;
    }
    table_ready = 1;
}

unsigned int checksum(const unsigned char *data, size_t len) {
    unsigned int crc = 4294967295u;
    size_t i = 0;

    if (!table_ready) {
        fill_table();
    }
    while (i < len) {
        crc = crc_table[(crc ^ data[i]) & 255] ^ (crc >> 8);
        i = i + 1;
    }
    return crc ^ 4294967295u;
}
