#pragma once

#include <array>
#include <functional>
#include <span>
#include <string>
#include <utility>

#include "bcad/dual.hpp"
#include "bcad/errors.hpp"

namespace bcad {

inline constexpr int kMaxKernelInputs = kMaxPartials; // one partial slot per input
inline constexpr int kMaxKernelOutputs = 8;

// A pure scalar function of N scalars to M scalars, held in both a real and
// a forward-mode instantiation of the same body. Purity is contractual: no
// side effects, no cross-element state; the broadcast machinery relies on it
// to reorder and parallelize element visits and to differentiate per cell.
template <class Real>
class BroadcastKernel {
public:
    using DualT = Dual<Real>;

    template <class Body>
    BroadcastKernel(int arity_in, int arity_out, std::string name, Body body)
        : arity_in_(arity_in), arity_out_(arity_out), name_(std::move(name)),
          real_body_(body), dual_body_(body) {
        if (arity_in_ < 1 || arity_in_ > kMaxKernelInputs)
            throw ArityMismatch("kernel input arity " + std::to_string(arity_in_) +
                                " outside [1, " + std::to_string(kMaxKernelInputs) + "]");
        if (arity_out_ < 1 || arity_out_ > kMaxKernelOutputs)
            throw ArityMismatch("kernel output arity " + std::to_string(arity_out_) +
                                " outside [1, " + std::to_string(kMaxKernelOutputs) + "]");
    }

    int arity_in() const { return arity_in_; }
    int arity_out() const { return arity_out_; }
    const std::string& name() const { return name_; }

    void eval(std::span<const Real> in, std::span<Real> out) const { real_body_(in, out); }
    void eval(std::span<const DualT> in, std::span<DualT> out) const { dual_body_(in, out); }

private:
    int arity_in_;
    int arity_out_;
    std::string name_;
    std::function<void(std::span<const Real>, std::span<Real>)> real_body_;
    std::function<void(std::span<const DualT>, std::span<DualT>)> dual_body_;
};

// Fuses g after f into one kernel: a single element visit, no intermediate
// tensors. Valid whenever both are pure and the arities line up.
template <class Real>
BroadcastKernel<Real> compose_kernels(const BroadcastKernel<Real>& g,
                                      const BroadcastKernel<Real>& f) {
    if (g.arity_in() != f.arity_out())
        throw ArityMismatch("cannot compose: inner kernel produces " +
                            std::to_string(f.arity_out()) + " outputs, outer expects " +
                            std::to_string(g.arity_in()));
    return BroadcastKernel<Real>(
        f.arity_in(), g.arity_out(), g.name() + "." + f.name(),
        [f, g](auto in, auto out) {
            using S = typename std::remove_cvref_t<decltype(out)>::value_type;
            std::array<S, kMaxKernelOutputs> mid;
            f.eval(in, std::span<S>(mid.data(), static_cast<std::size_t>(f.arity_out())));
            g.eval(std::span<const S>(mid.data(), static_cast<std::size_t>(g.arity_in())), out);
        });
}

template <class Real>
BroadcastKernel<Real> identity_kernel() {
    return BroadcastKernel<Real>(1, 1, "identity", [](auto in, auto out) { out[0] = in[0]; });
}

} // namespace bcad
