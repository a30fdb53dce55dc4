#include "bcad/bench.hpp"

int main(int argc, char** argv) {
    return bcad::bench::bench_main(argc, argv);
}
