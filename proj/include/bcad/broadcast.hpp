#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "bcad/counters.hpp"
#include "bcad/kernel.hpp"
#include "bcad/parallel.hpp"
#include "bcad/shape.hpp"
#include "bcad/tensor.hpp"

namespace bcad {

// Precomputed per-argument strides for one broadcast: stride 0 on axes where
// the argument has length 1 (or no axis at all), so walking output cells in
// row-major order indexes arguments directly without materializing copies.
struct BroadcastPlan {
    Shape out_shape;
    std::int64_t volume = 1;
    std::vector<std::vector<std::int64_t>> arg_strides; // [arg][out axis]
};

inline BroadcastPlan make_broadcast_plan(std::span<const Shape> shapes) {
    BroadcastPlan plan;
    plan.out_shape = broadcast_shape(shapes);
    plan.volume = plan.out_shape.volume();
    const int rank = plan.out_shape.rank();
    plan.arg_strides.reserve(shapes.size());
    for (const Shape& s : shapes) {
        std::vector<std::int64_t> strides(static_cast<std::size_t>(rank), 0);
        std::int64_t running = 1;
        for (int k = s.rank() - 1; k >= 0; --k) {
            strides[static_cast<std::size_t>(k)] = s.dim(k) == 1 ? 0 : running;
            running *= s.dim(k);
        }
        plan.arg_strides.push_back(std::move(strides));
    }
    return plan;
}

namespace detail {

// Visits every output cell, handing `fn(flat, arg_indices)` the flat offset
// into each argument. Cells are walked with an odometer so no divisions hit
// the inner loop; parallel chunks re-seed the odometer at their start cell.
// `fn` must write only to locations owned by its cell.
template <class Fn>
void plan_for_each(const BroadcastPlan& plan, bool parallel, const Fn& fn) {
    const int rank = plan.out_shape.rank();
    const int nargs = static_cast<int>(plan.arg_strides.size());

    auto run = [&](std::int64_t begin, std::int64_t end) {
        std::vector<std::int64_t> coords(static_cast<std::size_t>(rank), 0);
        std::vector<std::int64_t> idx(static_cast<std::size_t>(nargs), 0);
        unflatten_index(plan.out_shape, begin, coords);
        for (int j = 0; j < nargs; ++j)
            for (int d = 0; d < rank; ++d)
                idx[static_cast<std::size_t>(j)] +=
                    coords[static_cast<std::size_t>(d)] * plan.arg_strides[static_cast<std::size_t>(j)][static_cast<std::size_t>(d)];

        auto advance = [&] {
            for (int d = rank - 1; d >= 0; --d) {
                const std::int64_t len = plan.out_shape.dim(d);
                if (++coords[static_cast<std::size_t>(d)] < len) {
                    for (int j = 0; j < nargs; ++j)
                        idx[static_cast<std::size_t>(j)] += plan.arg_strides[static_cast<std::size_t>(j)][static_cast<std::size_t>(d)];
                    return;
                }
                coords[static_cast<std::size_t>(d)] = 0;
                for (int j = 0; j < nargs; ++j)
                    idx[static_cast<std::size_t>(j)] -= (len - 1) * plan.arg_strides[static_cast<std::size_t>(j)][static_cast<std::size_t>(d)];
            }
        };

        for (std::int64_t flat = begin; flat < end; ++flat) {
            fn(flat, std::span<const std::int64_t>(idx));
            advance();
        }
    };

    if (parallel) {
        detail::parallel_chunks(plan.volume, run);
    } else if (plan.volume > 0) {
        run(0, plan.volume);
    }
}

template <class Real>
std::vector<Shape> gather_shapes(std::span<const Tensor<Real>* const> args) {
    std::vector<Shape> shapes;
    shapes.reserve(args.size());
    for (const Tensor<Real>* t : args) shapes.push_back(t->shape());
    return shapes;
}

} // namespace detail

// broadcast(b, X1..XN): applies the kernel once per output cell, indexing
// arguments virtually. Allocates exactly the M output buffers.
template <class Real>
std::vector<Tensor<Real>> broadcast_apply(const BroadcastKernel<Real>& kernel,
                                          std::span<const Tensor<Real>* const> args) {
    if (static_cast<int>(args.size()) != kernel.arity_in())
        throw ArityMismatch("broadcast_apply: kernel " + kernel.name() + " expects " +
                            std::to_string(kernel.arity_in()) + " arguments, got " +
                            std::to_string(args.size()));
    const std::vector<Shape> shapes = detail::gather_shapes(args);
    const BroadcastPlan plan = make_broadcast_plan(shapes);
    const int n = kernel.arity_in();
    const int m = kernel.arity_out();

    std::vector<Tensor<Real>> outs(static_cast<std::size_t>(m), Tensor<Real>(plan.out_shape));
    detail::plan_for_each(plan, /*parallel=*/true, [&](std::int64_t flat, std::span<const std::int64_t> idx) {
        std::array<Real, kMaxKernelInputs> in;
        for (int j = 0; j < n; ++j) in[static_cast<std::size_t>(j)] = (*args[static_cast<std::size_t>(j)])[idx[static_cast<std::size_t>(j)]];
        std::array<Real, kMaxKernelOutputs> out;
        kernel.eval(std::span<const Real>(in.data(), static_cast<std::size_t>(n)),
                    std::span<Real>(out.data(), static_cast<std::size_t>(m)));
        for (int i = 0; i < m; ++i) outs[static_cast<std::size_t>(i)][flat] = out[static_cast<std::size_t>(i)];
    });
    count_element_visits(static_cast<std::uint64_t>(plan.volume));
    return outs;
}

template <class Real, class... Ts>
    requires(std::same_as<std::remove_cvref_t<Ts>, Tensor<Real>> && ...)
std::vector<Tensor<Real>> broadcast_apply(const BroadcastKernel<Real>& kernel, const Ts&... args) {
    const std::array<const Tensor<Real>*, sizeof...(Ts)> ptrs{&args...};
    return broadcast_apply<Real>(kernel, std::span<const Tensor<Real>* const>(ptrs));
}

// Serial reference: one obviously-correct pass using virtual_index per cell.
// Kept for differential tests against the strided parallel path.
template <class Real>
std::vector<Tensor<Real>> broadcast_apply_reference(const BroadcastKernel<Real>& kernel,
                                                    std::span<const Tensor<Real>* const> args) {
    if (static_cast<int>(args.size()) != kernel.arity_in())
        throw ArityMismatch("broadcast_apply_reference: wrong argument count");
    const std::vector<Shape> shapes = detail::gather_shapes(args);
    const Shape out_shape = broadcast_shape(shapes);
    const std::int64_t vol = out_shape.volume();
    const int n = kernel.arity_in();
    const int m = kernel.arity_out();

    std::vector<Tensor<Real>> outs(static_cast<std::size_t>(m), Tensor<Real>(out_shape));
    std::vector<std::int64_t> index(static_cast<std::size_t>(out_shape.rank()), 0);
    std::array<Real, kMaxKernelInputs> in;
    std::array<Real, kMaxKernelOutputs> out;
    for (std::int64_t flat = 0; flat < vol; ++flat) {
        unflatten_index(out_shape, flat, index);
        for (int j = 0; j < n; ++j)
            in[static_cast<std::size_t>(j)] =
                (*args[static_cast<std::size_t>(j)])[virtual_index(shapes[static_cast<std::size_t>(j)], index, out_shape)];
        kernel.eval(std::span<const Real>(in.data(), static_cast<std::size_t>(n)),
                    std::span<Real>(out.data(), static_cast<std::size_t>(m)));
        for (int i = 0; i < m; ++i) outs[static_cast<std::size_t>(i)][flat] = out[static_cast<std::size_t>(i)];
    }
    count_element_visits(static_cast<std::uint64_t>(vol));
    return outs;
}

template <class Real, class... Ts>
    requires(std::same_as<std::remove_cvref_t<Ts>, Tensor<Real>> && ...)
std::vector<Tensor<Real>> broadcast_apply_reference(const BroadcastKernel<Real>& kernel,
                                                    const Ts&... args) {
    const std::array<const Tensor<Real>*, sizeof...(Ts)> ptrs{&args...};
    return broadcast_apply_reference<Real>(kernel, std::span<const Tensor<Real>* const>(ptrs));
}

// --- Elementwise tensor helpers shared by the tape primitives ---

template <class Real, class F>
Tensor<Real> tensor_zip(const Tensor<Real>& a, const Tensor<Real>& b, F f) {
    const std::array<Shape, 2> shapes{a.shape(), b.shape()};
    const BroadcastPlan plan = make_broadcast_plan(shapes);
    Tensor<Real> out(plan.out_shape);
    detail::plan_for_each(plan, /*parallel=*/true, [&](std::int64_t flat, std::span<const std::int64_t> idx) {
        out[flat] = f(a[idx[0]], b[idx[1]]);
    });
    return out;
}

template <class Real, class F>
Tensor<Real> tensor_zip3(const Tensor<Real>& a, const Tensor<Real>& b, const Tensor<Real>& c, F f) {
    const std::array<Shape, 3> shapes{a.shape(), b.shape(), c.shape()};
    const BroadcastPlan plan = make_broadcast_plan(shapes);
    Tensor<Real> out(plan.out_shape);
    detail::plan_for_each(plan, /*parallel=*/true, [&](std::int64_t flat, std::span<const std::int64_t> idx) {
        out[flat] = f(a[idx[0]], b[idx[1]], c[idx[2]]);
    });
    return out;
}

template <class Real, class F>
Tensor<Real> tensor_map(const Tensor<Real>& a, F f) {
    Tensor<Real> out(a.shape());
    detail::parallel_chunks(a.volume(), [&](std::int64_t begin, std::int64_t end) {
        for (std::int64_t i = begin; i < end; ++i) out[i] = f(a[i]);
    });
    return out;
}

// The central broadcast-adjoint rule: adds every cell of `contribution` into
// `acc` at its virtually-indexed location. When acc is the smaller shape this
// sum-reduces over the expanded axes; when acc is larger it broadcasts the
// contribution out. Serial on purpose: accumulation order is fixed so
// gradients are bit-stable regardless of thread count.
template <class Real>
void scatter_add(Tensor<Real>& acc, const Tensor<Real>& contribution) {
    const std::array<Shape, 2> shapes{acc.shape(), contribution.shape()};
    const BroadcastPlan plan = make_broadcast_plan(shapes);
    detail::plan_for_each(plan, /*parallel=*/false, [&](std::int64_t, std::span<const std::int64_t> idx) {
        acc[idx[0]] += contribution[idx[1]];
    });
}

// Sum over the masked axes, keeping them as length 1.
template <class Real>
Tensor<Real> reduce_sum_keepdims(const Tensor<Real>& a, std::span<const int> axes) {
    std::vector<std::int64_t> dims(a.shape().dims().begin(), a.shape().dims().end());
    for (int axis : axes) {
        if (axis < 0 || axis >= a.shape().rank())
            throw ShapeMismatch("reduce axis " + std::to_string(axis) + " out of range for " +
                                a.shape().str());
        dims[static_cast<std::size_t>(axis)] = 1;
    }
    Tensor<Real> out{Shape(std::move(dims))};
    scatter_add(out, a);
    return out;
}

} // namespace bcad
