#pragma once

#include <span>
#include <utility>
#include <vector>

#include "bcad/forward.hpp"
#include "bcad/tape.hpp"

namespace bcad {

// When the fused kernel's elementwise Jacobian is materialized. CacheForward
// computes it with the primal in one element visit and holds it until the
// reverse sweep; RecomputeReverse stores nothing and reruns the forward
// differentiation when the adjoint arrives. Same arithmetic, same gradients,
// different peak memory.
enum class MixedPolicy {
    CacheForward,
    RecomputeReverse,
};

namespace detail {

// Backpropagation of an elementwise Jacobian: input j receives
// sum over outputs i of (adjoint_i * diag(i, j)), sum-reduced over axes
// where input j was broadcast-expanded.
template <class Real>
void backprop_diag(Tape<Real>& tape, int node, int outputs, int inputs,
                   std::span<const Tensor<Real>> entries) {
    const std::span<const Var<Real>> ins = tape.node_inputs(node);
    for (int i = 0; i < outputs; ++i) {
        const Tensor<Real>* w = tape.adjoint_or_null(node, i);
        if (!w) continue;
        for (int j = 0; j < inputs; ++j) {
            tape.accumulate_adjoint(
                ins[static_cast<std::size_t>(j)],
                tensor_zip(*w, entries[static_cast<std::size_t>(i * inputs + j)],
                           [](Real g, Real d) { return g * d; }));
        }
    }
}

} // namespace detail

// Records an entire broadcast kernel as ONE tape node, however complex its
// body. The kernel is differentiated in forward mode per element (it may
// branch freely); the reverse sweep only multiplies adjoints against the
// resulting diagonals. No reversible subgraph of the kernel body ever exists.
template <class Real>
std::vector<Var<Real>> mixed_broadcast(Tape<Real>& tape, const BroadcastKernel<Real>& kernel,
                                       std::span<const Var<Real>> inputs, MixedPolicy policy) {
    if (static_cast<int>(inputs.size()) != kernel.arity_in())
        throw ArityMismatch("mixed_broadcast: kernel " + kernel.name() + " expects " +
                            std::to_string(kernel.arity_in()) + " inputs, got " +
                            std::to_string(inputs.size()));
    std::vector<const Tensor<Real>*> arg_ptrs;
    arg_ptrs.reserve(inputs.size());
    for (const Var<Real>& v : inputs) arg_ptrs.push_back(&tape.value(v));

    if (policy == MixedPolicy::CacheForward) {
        // Primal and Jacobian from the same element visit; diagonals ride
        // the node cache until backward.
        ForwardBroadcastResult<Real> fwd =
            broadcast_diag_jacobian<Real>(kernel, arg_ptrs, /*want_primal=*/true);
        std::vector<Tensor<Real>> cache = std::move(fwd.jacobian.entries);
        const int m = fwd.jacobian.outputs;
        const int n = fwd.jacobian.inputs;
        return tape.append_custom(
            "mixed[" + kernel.name() + "]", inputs, std::move(fwd.primals), std::move(cache),
            [m, n](Tape<Real>& t, int node) {
                detail::backprop_diag(t, node, m, n, t.node_cache(node));
            });
    }

    // RecomputeReverse: primal only now; the backward rule redundantly
    // reruns the forward differentiation and frees the diagonals as soon as
    // they are backpropagated.
    std::vector<Tensor<Real>> primals = broadcast_apply<Real>(kernel, arg_ptrs);
    return tape.append_custom(
        "mixed[" + kernel.name() + "]", inputs, std::move(primals), {},
        [kernel](Tape<Real>& t, int node) {
            const std::span<const Var<Real>> ins = t.node_inputs(node);
            std::vector<const Tensor<Real>*> ptrs;
            ptrs.reserve(ins.size());
            for (const Var<Real>& v : ins) ptrs.push_back(&t.value(v));
            ForwardBroadcastResult<Real> fwd =
                broadcast_diag_jacobian<Real>(kernel, ptrs, /*want_primal=*/false);
            detail::backprop_diag<Real>(t, node, fwd.jacobian.outputs, fwd.jacobian.inputs,
                                        fwd.jacobian.entries);
        });
}

template <class Real>
std::vector<Var<Real>> mixed_broadcast(Tape<Real>& tape, const BroadcastKernel<Real>& kernel,
                                       std::initializer_list<Var<Real>> inputs,
                                       MixedPolicy policy) {
    return mixed_broadcast(tape, kernel, std::span<const Var<Real>>(inputs.begin(), inputs.size()),
                           policy);
}

// Runs the same kernel under both policies on fresh tapes, seeding every
// output with ones, and reports whether all input gradients are bit-identical.
template <class Real>
bool policy_equivalence_check(const BroadcastKernel<Real>& kernel,
                              std::span<const Tensor<Real>> inputs) {
    auto run = [&](MixedPolicy policy) {
        Tape<Real> tape;
        std::vector<Var<Real>> vars;
        vars.reserve(inputs.size());
        for (const Tensor<Real>& t : inputs) vars.push_back(tape.input(t));
        std::vector<Var<Real>> outs = mixed_broadcast<Real>(tape, kernel, vars, policy);
        std::vector<std::pair<Var<Real>, Tensor<Real>>> seeds;
        for (Var<Real> o : outs)
            seeds.emplace_back(o, Tensor<Real>(tape.value(o).shape(), Real(1)));
        Gradients<Real> grads = tape.backward(std::span<const std::pair<Var<Real>, Tensor<Real>>>(seeds));
        std::vector<Tensor<Real>> out;
        out.reserve(vars.size());
        for (Var<Real> v : vars) out.push_back(grads.at(v));
        return out;
    };

    const std::vector<Tensor<Real>> cached = run(MixedPolicy::CacheForward);
    const std::vector<Tensor<Real>> recomputed = run(MixedPolicy::RecomputeReverse);
    for (std::size_t k = 0; k < cached.size(); ++k) {
        if (!(cached[k].shape() == recomputed[k].shape())) return false;
        for (std::int64_t e = 0; e < cached[k].volume(); ++e)
            if (cached[k][e] != recomputed[k][e]) return false;
    }
    return true;
}

} // namespace bcad
