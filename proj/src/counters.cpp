#include "bcad/counters.hpp"

#include <mutex>
#include <vector>

namespace bcad {
namespace {

std::mutex registry_mutex;
std::vector<const EvalCounters*>& registry() {
    static std::vector<const EvalCounters*> slots;
    return slots;
}

struct Slot {
    EvalCounters counters;
    Slot() {
        std::lock_guard lock(registry_mutex);
        registry().push_back(&counters);
    }
    // Slots are intentionally leaked into the registry: totals must keep
    // counting work done by threads that have already exited.
};

} // namespace

namespace detail {
EvalCounters& local_counters() {
    thread_local Slot* slot = new Slot();
    return slot->counters;
}
} // namespace detail

EvalCounters counter_totals() {
    std::lock_guard lock(registry_mutex);
    EvalCounters total;
    for (const EvalCounters* c : registry()) {
        total.transcendental_evals += c->transcendental_evals;
        total.kernel_element_visits += c->kernel_element_visits;
    }
    return total;
}

} // namespace bcad
