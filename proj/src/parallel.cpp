#include "bcad/parallel.hpp"

#include <atomic>

namespace bcad {
namespace {
std::atomic<int> g_threads{0};
}

void set_broadcast_threads(int threads) {
    g_threads.store(threads < 0 ? 0 : threads, std::memory_order_relaxed);
}

int broadcast_threads() {
    return g_threads.load(std::memory_order_relaxed);
}

} // namespace bcad
