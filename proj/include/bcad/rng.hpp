#pragma once

#include <cstdint>
#include <random>

namespace bcad {

// Seeded mt19937_64 with hand-rolled distributions. std::uniform_real_distribution
// is implementation-defined, so records produced on different standard libraries
// would diverge; drawing from raw 64-bit output keeps runs reproducible anywhere.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t raw() { return gen_(); }

    // Uniform on [0, 1) with 53-bit resolution.
    double uniform01() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    // Uniform on (-1, 1).
    double uniform_pm1() { return 2.0 * uniform01() - 1.0; }

    // Exact 0.0 or 1.0.
    double binary(double p_one = 0.5) { return uniform01() < p_one ? 1.0 : 0.0; }

    // Uniform integer in [0, n). Modulo bias is irrelevant here; determinism is not.
    std::uint64_t below(std::uint64_t n) { return gen_() % n; }

private:
    std::mt19937_64 gen_;
};

} // namespace bcad
