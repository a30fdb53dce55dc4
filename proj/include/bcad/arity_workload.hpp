#pragma once

#include <string>
#include <type_traits>

#include "bcad/kernel.hpp"

namespace bcad {

// Branchy inner function of the arity study: identity above one half,
// reflection below. Derivative is +1 or -1 depending on the branch taken.
template <class S>
S reflect_below_half(S x) {
    return x > 0.5 ? x : -x;
}

// f(x_1 .. x_N) = product of tanh(g(x_i)): a balanced workload whose input
// arity (and with it the perturbation-vector width) scales freely.
template <class Real>
BroadcastKernel<Real> tanh_product_kernel(int arity) {
    return BroadcastKernel<Real>(
        arity, 1, "tanh_product_" + std::to_string(arity), [arity](auto in, auto out) {
            using S = typename std::remove_cvref_t<decltype(out)>::value_type;
            S acc = tanh(reflect_below_half(in[0]));
            for (int j = 1; j < arity; ++j) acc = acc * tanh(reflect_below_half(in[j]));
            out[0] = acc;
        });
}

} // namespace bcad
