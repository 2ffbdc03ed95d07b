#include <stdint.h>

int8_t relu(int8_t x) {
    return x > 0 ? x : 0;
}
