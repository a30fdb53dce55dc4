#pragma once

#include <functional>
#include <span>
#include <vector>

#include "bcad/arity_workload.hpp"
#include "bcad/hmlstm.hpp"
#include "bcad/kernel.hpp"
#include "bcad/rng.hpp"
#include "bcad/shape.hpp"
#include "bcad/tensor.hpp"

namespace bcad::testutil {

// Pure kernels exercised by the property suites. `boundary_distance` gives
// the distance from a point to the nearest branch boundary so probes can
// steer clear of non-smooth spots; smooth kernels return +inf.
struct PoolKernel {
    BroadcastKernel<double> kernel;
    std::function<double(std::span<const double>)> boundary_distance;
};

inline double smooth(std::span<const double>) {
    return 1e30;
}

inline std::vector<PoolKernel> kernel_pool() {
    using K = BroadcastKernel<double>;
    std::vector<PoolKernel> pool;

    pool.push_back({identity_kernel<double>(), smooth});

    pool.push_back({K(1, 1, "reflect", [](auto in, auto out) { out[0] = reflect_below_half(in[0]); }),
                    [](std::span<const double> x) { return std::fabs(x[0] - 0.5); }});

    pool.push_back({K(1, 1, "tanh_sigmoid",
                      [](auto in, auto out) { out[0] = tanh(in[0]) * sigmoid(in[0]); }),
                    smooth});

    pool.push_back({K(2, 1, "product", [](auto in, auto out) { out[0] = in[0] * in[1]; }), smooth});

    pool.push_back({K(2, 1, "gated",
                      [](auto in, auto out) { out[0] = in[0] + sigmoid(in[1]) * tanh(in[0]); }),
                    smooth});

    pool.push_back({K(2, 2, "prod_diff",
                      [](auto in, auto out) {
                          out[0] = in[0] * in[1];
                          out[1] = in[0] - in[1];
                      }),
                    smooth});

    pool.push_back({K(3, 1, "blend",
                      [](auto in, auto out) {
                          auto w = sigmoid(in[0]);
                          out[0] = w * in[1] + (1.0 - w) * in[2];
                      }),
                    smooth});

    pool.push_back({K(3, 2, "curl",
                      [](auto in, auto out) {
                          out[0] = in[0] * in[1] + cos(in[2]);
                          out[1] = in[2] * tanh(in[0]);
                      }),
                    smooth});

    pool.push_back({tanh_product_kernel<double>(4), [](std::span<const double> x) {
                        double d = 1e30;
                        for (double v : x) d = std::min(d, std::fabs(v - 0.5));
                        return d;
                    }});

    pool.push_back({cell_update_kernel<double>(), [](std::span<const double> x) {
                        double d = 1e30;
                        for (std::size_t j = 4; j < 6; ++j) {
                            d = std::min(d, std::fabs(x[j]));
                            d = std::min(d, std::fabs(x[j] - 1.0));
                        }
                        return d;
                    }});

    pool.push_back({K(2, 3, "fanout",
                      [](auto in, auto out) {
                          out[0] = in[0] + in[1];
                          out[1] = in[0] * in[1];
                          out[2] = sigmoid(in[0]) - tanh(in[1]);
                      }),
                    smooth});

    pool.push_back({K(5, 1, "fiveway",
                      [](auto in, auto out) { out[0] = in[0] * in[1] + in[2] * in[3] * in[4]; }),
                    smooth});

    pool.push_back({K(3, 1, "wave",
                      [](auto in, auto out) {
                          out[0] = sin(in[0]) * exp(-(in[1] * in[1])) + cos(in[2]);
                      }),
                    smooth});

    return pool;
}

// Broadcast-compatible random shapes: an output shape of bounded rank and
// extent, each argument keeping or collapsing each axis, possibly dropping
// trailing axes entirely.
inline std::vector<Shape> random_shapes(Rng& rng, int n_args, int max_rank = 3,
                                        std::int64_t max_len = 4) {
    const int rank = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(max_rank)));
    std::vector<std::int64_t> out_dims;
    for (int k = 0; k < rank; ++k)
        out_dims.push_back(1 + static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(max_len))));
    std::vector<Shape> shapes;
    for (int j = 0; j < n_args; ++j) {
        const int keep_rank = rng.below(4) == 0
                                  ? static_cast<int>(rng.below(static_cast<std::uint64_t>(rank + 1)))
                                  : rank;
        std::vector<std::int64_t> dims;
        for (int k = 0; k < keep_rank; ++k)
            dims.push_back(rng.below(3) == 0 ? 1 : out_dims[static_cast<std::size_t>(k)]);
        shapes.push_back(Shape(std::move(dims)));
    }
    return shapes;
}

inline std::vector<Tensor<double>> random_args(Rng& rng, std::span<const Shape> shapes) {
    std::vector<Tensor<double>> args;
    args.reserve(shapes.size());
    for (const Shape& s : shapes) args.push_back(random_pm1<double>(s, rng));
    return args;
}

inline std::vector<const Tensor<double>*> arg_pointers(std::span<const Tensor<double>> args) {
    std::vector<const Tensor<double>*> ptrs;
    ptrs.reserve(args.size());
    for (const Tensor<double>& t : args) ptrs.push_back(&t);
    return ptrs;
}

} // namespace bcad::testutil
