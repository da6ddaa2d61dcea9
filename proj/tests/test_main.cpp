#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

extern "C" void openblas_set_num_threads(int);

int main(int argc, char** argv) {
    openblas_set_num_threads(1);
    return doctest::Context(argc, argv).run();
}
