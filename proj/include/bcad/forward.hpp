#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "bcad/broadcast.hpp"
#include "bcad/dual.hpp"
#include "bcad/kernel.hpp"

namespace bcad {

// The nonzero structure of a broadcast Jacobian: entry (i, j) holds the
// diagonal of d vec(Y_i) / d vec(X_j expanded), reshaped to the output
// shape. Cross-element partials of a pure kernel are zero by construction
// and are never stored.
template <class Real>
struct DiagJacobian {
    Shape out_shape;
    int outputs = 0; // M
    int inputs = 0;  // N
    std::vector<Tensor<Real>> entries; // M*N tensors, all of out_shape

    Tensor<Real>& entry(int i, int j) {
        return entries[static_cast<std::size_t>(i * inputs + j)];
    }
    const Tensor<Real>& entry(int i, int j) const {
        return entries[static_cast<std::size_t>(i * inputs + j)];
    }
};

template <class Real>
struct ForwardBroadcastResult {
    std::vector<Tensor<Real>> primals; // populated only when requested
    DiagJacobian<Real> jacobian;
};

// The pointwise Jacobian operator: seeds the kernel's inputs with orthogonal
// tagged perturbations and reads the full M-by-N partial matrix off the
// outputs, together with the primals from the very same evaluation.
template <class Real>
class PointwiseJacobian {
public:
    explicit PointwiseJacobian(BroadcastKernel<Real> kernel) : kernel_(std::move(kernel)) {}

    int arity_in() const { return kernel_.arity_in(); }
    int arity_out() const { return kernel_.arity_out(); }

    // `jacobian` is row-major M-by-N.
    void operator()(std::span<const Real> x, std::span<Real> primals,
                    std::span<Real> jacobian) const {
        const int n = kernel_.arity_in();
        const int m = kernel_.arity_out();
        const Tag tag = fresh_tag();
        std::array<Dual<Real>, kMaxKernelInputs> in;
        seed_into<Real>(x, tag, std::span<Dual<Real>>(in.data(), static_cast<std::size_t>(n)));
        std::array<Dual<Real>, kMaxKernelOutputs> out;
        kernel_.eval(std::span<const Dual<Real>>(in.data(), static_cast<std::size_t>(n)),
                     std::span<Dual<Real>>(out.data(), static_cast<std::size_t>(m)));
        for (int i = 0; i < m; ++i) {
            primals[static_cast<std::size_t>(i)] = out[static_cast<std::size_t>(i)].primal();
            for (int j = 0; j < n; ++j)
                jacobian[static_cast<std::size_t>(i * n + j)] =
                    out[static_cast<std::size_t>(i)].partial_for(tag, j);
        }
    }

    const BroadcastKernel<Real>& kernel() const { return kernel_; }

private:
    BroadcastKernel<Real> kernel_;
};

template <class Real>
PointwiseJacobian<Real> jacobian_operator(const BroadcastKernel<Real>& kernel) {
    return PointwiseJacobian<Real>(kernel);
}

namespace detail {

inline std::string index_string(const Shape& shape, std::int64_t flat) {
    std::vector<std::int64_t> index(static_cast<std::size_t>(shape.rank()), 0);
    unflatten_index(shape, flat, index);
    std::string s = "(";
    for (int k = 0; k < shape.rank(); ++k) {
        if (k) s += ", ";
        s += std::to_string(index[static_cast<std::size_t>(k)]);
    }
    return s + ")";
}

} // namespace detail

// All elementwise partials of broadcast(b, args) in one pass: per output
// cell the inputs are seeded once with a shared per-invocation tag, the dual
// body runs once, and primals plus all M*N partials come off together.
template <class Real>
ForwardBroadcastResult<Real> broadcast_diag_jacobian(const BroadcastKernel<Real>& kernel,
                                                     std::span<const Tensor<Real>* const> args,
                                                     bool want_primal) {
    if (static_cast<int>(args.size()) != kernel.arity_in())
        throw ArityMismatch("broadcast_diag_jacobian: kernel " + kernel.name() + " expects " +
                            std::to_string(kernel.arity_in()) + " arguments, got " +
                            std::to_string(args.size()));
    const std::vector<Shape> shapes = detail::gather_shapes(args);
    const BroadcastPlan plan = make_broadcast_plan(shapes);
    const int n = kernel.arity_in();
    const int m = kernel.arity_out();
    const Tag tag = fresh_tag();

    ForwardBroadcastResult<Real> result;
    result.jacobian.out_shape = plan.out_shape;
    result.jacobian.outputs = m;
    result.jacobian.inputs = n;
    result.jacobian.entries.assign(static_cast<std::size_t>(m * n), Tensor<Real>(plan.out_shape));
    if (want_primal)
        result.primals.assign(static_cast<std::size_t>(m), Tensor<Real>(plan.out_shape));

    detail::plan_for_each(plan, /*parallel=*/true, [&](std::int64_t flat, std::span<const std::int64_t> idx) {
        std::array<Dual<Real>, kMaxKernelInputs> in;
        for (int j = 0; j < n; ++j) {
            in[static_cast<std::size_t>(j)] =
                Dual<Real>((*args[static_cast<std::size_t>(j)])[idx[static_cast<std::size_t>(j)]], n, tag);
            in[static_cast<std::size_t>(j)].set_partial(j, Real(1));
        }
        std::array<Dual<Real>, kMaxKernelOutputs> out;
        try {
            kernel.eval(std::span<const Dual<Real>>(in.data(), static_cast<std::size_t>(n)),
                        std::span<Dual<Real>>(out.data(), static_cast<std::size_t>(m)));
            for (int i = 0; i < m; ++i) {
                if (want_primal)
                    result.primals[static_cast<std::size_t>(i)][flat] = out[static_cast<std::size_t>(i)].primal();
                for (int j = 0; j < n; ++j)
                    result.jacobian.entry(i, j)[flat] = out[static_cast<std::size_t>(i)].partial_for(tag, j);
            }
        } catch (const DomainError& e) {
            throw DomainError(std::string(e.what()) + " at output index " +
                              detail::index_string(plan.out_shape, flat));
        } catch (const NonDifferentiablePoint& e) {
            throw NonDifferentiablePoint(std::string(e.what()) + " at output index " +
                                         detail::index_string(plan.out_shape, flat));
        } catch (const DivisionByZero& e) {
            throw DivisionByZero(std::string(e.what()) + " at output index " +
                                 detail::index_string(plan.out_shape, flat));
        }
    });
    count_element_visits(static_cast<std::uint64_t>(plan.volume));
    return result;
}

template <class Real, class... Ts>
    requires(std::same_as<std::remove_cvref_t<Ts>, Tensor<Real>> && ...)
ForwardBroadcastResult<Real> broadcast_diag_jacobian(const BroadcastKernel<Real>& kernel,
                                                     bool want_primal, const Ts&... args) {
    const std::array<const Tensor<Real>*, sizeof...(Ts)> ptrs{&args...};
    return broadcast_diag_jacobian<Real>(kernel, std::span<const Tensor<Real>* const>(ptrs),
                                         want_primal);
}

// Serial differential-testing twin: drives the public pointwise operator
// cell by cell through virtual_index instead of the strided plan.
template <class Real>
ForwardBroadcastResult<Real> broadcast_diag_jacobian_reference(
    const BroadcastKernel<Real>& kernel, std::span<const Tensor<Real>* const> args,
    bool want_primal) {
    const std::vector<Shape> shapes = detail::gather_shapes(args);
    const Shape out_shape = broadcast_shape(shapes);
    const std::int64_t vol = out_shape.volume();
    const int n = kernel.arity_in();
    const int m = kernel.arity_out();
    const PointwiseJacobian<Real> op(kernel);

    ForwardBroadcastResult<Real> result;
    result.jacobian.out_shape = out_shape;
    result.jacobian.outputs = m;
    result.jacobian.inputs = n;
    result.jacobian.entries.assign(static_cast<std::size_t>(m * n), Tensor<Real>(out_shape));
    if (want_primal) result.primals.assign(static_cast<std::size_t>(m), Tensor<Real>(out_shape));

    std::vector<std::int64_t> index(static_cast<std::size_t>(out_shape.rank()), 0);
    std::array<Real, kMaxKernelInputs> x;
    std::array<Real, kMaxKernelOutputs> primals;
    std::array<Real, kMaxKernelInputs * kMaxKernelOutputs> jac;
    for (std::int64_t flat = 0; flat < vol; ++flat) {
        unflatten_index(out_shape, flat, index);
        for (int j = 0; j < n; ++j)
            x[static_cast<std::size_t>(j)] =
                (*args[static_cast<std::size_t>(j)])[virtual_index(shapes[static_cast<std::size_t>(j)], index, out_shape)];
        op(std::span<const Real>(x.data(), static_cast<std::size_t>(n)),
           std::span<Real>(primals.data(), static_cast<std::size_t>(m)),
           std::span<Real>(jac.data(), static_cast<std::size_t>(m * n)));
        for (int i = 0; i < m; ++i) {
            if (want_primal) result.primals[static_cast<std::size_t>(i)][flat] = primals[static_cast<std::size_t>(i)];
            for (int j = 0; j < n; ++j)
                result.jacobian.entry(i, j)[flat] = jac[static_cast<std::size_t>(i * n + j)];
        }
    }
    count_element_visits(static_cast<std::uint64_t>(vol));
    return result;
}

template <class Real, class... Ts>
    requires(std::same_as<std::remove_cvref_t<Ts>, Tensor<Real>> && ...)
ForwardBroadcastResult<Real> broadcast_diag_jacobian_reference(const BroadcastKernel<Real>& kernel,
                                                               bool want_primal, const Ts&... args) {
    const std::array<const Tensor<Real>*, sizeof...(Ts)> ptrs{&args...};
    return broadcast_diag_jacobian_reference<Real>(
        kernel, std::span<const Tensor<Real>* const>(ptrs), want_primal);
}

} // namespace bcad
