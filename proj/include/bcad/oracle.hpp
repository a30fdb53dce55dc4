#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include "bcad/broadcast.hpp"
#include "bcad/dual.hpp"
#include "bcad/kernel.hpp"

namespace bcad {

// Central finite differences with the cube-root-of-epsilon step rule.
template <class Real>
struct FdConfig {
    double step_scale = std::cbrt(static_cast<double>(std::numeric_limits<Real>::epsilon()));
    double rel_tol = std::is_same_v<Real, double> ? 1e-5 : 1e-2;
    double fixed_step = 0.0; // > 0 overrides the step rule (convergence studies)

    double step_at(double x) const {
        if (fixed_step > 0.0) return fixed_step;
        const double ax = std::fabs(x);
        return step_scale * (ax > 1.0 ? ax : 1.0);
    }
};

namespace detail {

template <class Real>
Real fd_eval_checked(const std::function<Real(std::span<const Tensor<Real>>)>& fn,
                     std::span<const Tensor<Real>> inputs) {
    const Real v = fn(inputs);
    if (!std::isfinite(static_cast<double>(v)))
        throw NonFiniteValue("finite-difference probe produced a non-finite value");
    return v;
}

} // namespace detail

// Gradient of a scalar-valued tensor function by central differences, one
// probe pair per input element.
template <class Real>
std::vector<Tensor<Real>> fd_gradient(const std::function<Real(std::span<const Tensor<Real>>)>& fn,
                                      std::span<const Tensor<Real>> inputs,
                                      const FdConfig<Real>& cfg = {}) {
    std::vector<Tensor<Real>> work(inputs.begin(), inputs.end());
    std::vector<Tensor<Real>> grads;
    grads.reserve(inputs.size());
    for (std::size_t j = 0; j < inputs.size(); ++j) {
        Tensor<Real> g(inputs[j].shape());
        for (std::int64_t e = 0; e < inputs[j].volume(); ++e) {
            const Real x = inputs[j][e];
            const Real h = static_cast<Real>(cfg.step_at(static_cast<double>(x)));
            work[j][e] = x + h;
            const Real up = detail::fd_eval_checked<Real>(fn, work);
            work[j][e] = x - h;
            const Real down = detail::fd_eval_checked<Real>(fn, work);
            work[j][e] = x;
            g[e] = (up - down) / (Real(2) * h);
        }
        grads.push_back(std::move(g));
    }
    return grads;
}

// Same probe, restricted to chosen (input, element) coordinates. Used where
// a full sweep would dwarf the computation being checked.
template <class Real>
std::vector<Real> fd_gradient_at(const std::function<Real(std::span<const Tensor<Real>>)>& fn,
                                 std::span<const Tensor<Real>> inputs,
                                 std::span<const std::pair<std::size_t, std::int64_t>> coords,
                                 const FdConfig<Real>& cfg = {}) {
    std::vector<Tensor<Real>> work(inputs.begin(), inputs.end());
    std::vector<Real> out;
    out.reserve(coords.size());
    for (const auto& [j, e] : coords) {
        const Real x = inputs[j][e];
        const Real h = static_cast<Real>(cfg.step_at(static_cast<double>(x)));
        work[j][e] = x + h;
        const Real up = detail::fd_eval_checked<Real>(fn, work);
        work[j][e] = x - h;
        const Real down = detail::fd_eval_checked<Real>(fn, work);
        work[j][e] = x;
        out.push_back((up - down) / (Real(2) * h));
    }
    return out;
}

// Scalar partial d fn / d x_j at a point, for pointwise checks.
template <class Real>
Real fd_partial(const std::function<Real(std::span<const Real>)>& fn,
                std::span<const Real> point, std::size_t j, const FdConfig<Real>& cfg = {}) {
    std::vector<Real> work(point.begin(), point.end());
    const Real x = point[j];
    const Real h = static_cast<Real>(cfg.step_at(static_cast<double>(x)));
    work[j] = x + h;
    const Real up = fn(work);
    work[j] = x - h;
    const Real down = fn(work);
    if (!std::isfinite(static_cast<double>(up)) || !std::isfinite(static_cast<double>(down)))
        throw NonFiniteValue("finite-difference probe produced a non-finite value");
    return (up - down) / (Real(2) * h);
}

// Full Jacobian blocks d vec(Y_i) / d vec(X_j expanded), built by perturbing
// one expanded input element at a time. Exhaustive and slow on purpose: the
// off-diagonal entries it fills in are exactly what the diagonal fast path
// never computes, so it can certify them zero.
template <class Real>
struct DenseJacobian {
    Shape out_shape;
    int outputs = 0;
    int inputs = 0;
    std::int64_t vol = 0;
    std::vector<Tensor<Real>> blocks; // M*N matrices of shape (vol, vol)

    Tensor<Real>& block(int i, int j) { return blocks[static_cast<std::size_t>(i * inputs + j)]; }
    const Tensor<Real>& block(int i, int j) const {
        return blocks[static_cast<std::size_t>(i * inputs + j)];
    }
};

inline constexpr std::int64_t kDenseJacobianElementGuard = 4096;

template <class Real>
DenseJacobian<Real> dense_jacobian(const BroadcastKernel<Real>& kernel,
                                   std::span<const Tensor<Real>* const> args) {
    const std::vector<Shape> shapes = detail::gather_shapes(args);
    const BroadcastPlan plan = make_broadcast_plan(shapes);
    if (plan.volume > kDenseJacobianElementGuard)
        throw SizeGuardExceeded("dense_jacobian limited to " +
                                std::to_string(kDenseJacobianElementGuard) + " elements, got " +
                                std::to_string(plan.volume));
    const int n = kernel.arity_in();
    const int m = kernel.arity_out();
    const std::int64_t vol = plan.volume;

    DenseJacobian<Real> dense;
    dense.out_shape = plan.out_shape;
    dense.outputs = m;
    dense.inputs = n;
    dense.vol = vol;
    dense.blocks.assign(static_cast<std::size_t>(m * n), Tensor<Real>(Shape{vol, vol}));

    // Column (j, seed_cell): perturb only element seed_cell of the expanded
    // input j, then evaluate every output cell with one-wide duals.
    for (int j = 0; j < n; ++j) {
        for (std::int64_t seed_cell = 0; seed_cell < vol; ++seed_cell) {
            const Tag tag = fresh_tag();
            detail::plan_for_each(plan, /*parallel=*/false, [&](std::int64_t out_cell,
                                                                std::span<const std::int64_t> idx) {
                std::array<Dual<Real>, kMaxKernelInputs> in;
                for (int a = 0; a < n; ++a)
                    in[static_cast<std::size_t>(a)] =
                        Dual<Real>((*args[static_cast<std::size_t>(a)])[idx[static_cast<std::size_t>(a)]], 1, tag);
                if (out_cell == seed_cell) in[static_cast<std::size_t>(j)].set_partial(0, Real(1));
                std::array<Dual<Real>, kMaxKernelOutputs> out;
                kernel.eval(std::span<const Dual<Real>>(in.data(), static_cast<std::size_t>(n)),
                            std::span<Dual<Real>>(out.data(), static_cast<std::size_t>(m)));
                for (int i = 0; i < m; ++i)
                    dense.block(i, j)[out_cell * vol + seed_cell] =
                        out[static_cast<std::size_t>(i)].partial_for(tag, 0);
            });
        }
    }
    return dense;
}

template <class Real, class... Ts>
    requires(std::same_as<std::remove_cvref_t<Ts>, Tensor<Real>> && ...)
DenseJacobian<Real> dense_jacobian(const BroadcastKernel<Real>& kernel, const Ts&... args) {
    const std::array<const Tensor<Real>*, sizeof...(Ts)> ptrs{&args...};
    return dense_jacobian<Real>(kernel, std::span<const Tensor<Real>* const>(ptrs));
}

} // namespace bcad
