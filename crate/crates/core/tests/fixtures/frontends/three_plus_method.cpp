#include <cstdint>

int add(int a, int b) {
    return a + b;
}

class Counter {
public:
    int bump(int by) {
        value += by;
        return value;
    }
private:
    int value = 0;
};

long square(long x) { return x * x; }

bool is_even(unsigned n) {
    // braces in comments { are ignored }
    return n % 2 == 0;
}
