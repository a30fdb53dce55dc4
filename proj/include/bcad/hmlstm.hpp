#pragma once

#include <cstdint>
#include <string>

#include "bcad/mixed.hpp"
#include "bcad/rng.hpp"
#include "bcad/tape.hpp"

namespace bcad {

// Cell-update workload: four n-by-n gate/state matrices and two length-n
// boundary vectors holding exact 0.0/1.0 values, broadcast along columns.
template <class Real>
struct CellInputs {
    Tensor<Real> c_prev, f, i, g; // (n, n)
    Tensor<Real> z1, z2;          // (n,), each element exactly 0.0 or 1.0

    void validate() const {
        const Shape& s = c_prev.shape();
        if (!(f.shape() == s) || !(i.shape() == s) || !(g.shape() == s))
            throw ShapeMismatch("cell matrices must share one shape");
        if (s.rank() != 2 || s.dim(0) != s.dim(1))
            throw ShapeMismatch("cell matrices must be square, got " + s.str());
        const Shape zs{s.dim(0)};
        if (!(z1.shape() == zs) || !(z2.shape() == zs))
            throw ShapeMismatch("boundary vectors must have length " + std::to_string(s.dim(0)));
        for (const Tensor<Real>* z : {&z1, &z2})
            for (std::int64_t e = 0; e < z->volume(); ++e)
                if ((*z)[e] != Real(0) && (*z)[e] != Real(1))
                    throw Error("boundary vectors must contain exactly 0.0 or 1.0");
    }
};

template <class Real>
CellInputs<Real> random_cell_inputs(std::int64_t n, Rng& rng) {
    const Shape mat{n, n};
    const Shape vec{n};
    CellInputs<Real> in{random_pm1<Real>(mat, rng), random_pm1<Real>(mat, rng),
                        random_pm1<Real>(mat, rng), random_pm1<Real>(mat, rng),
                        random_binary<Real>(vec, rng), random_binary<Real>(vec, rng)};
    return in;
}

// The fused scalar update. Ordered cases; anything not UPDATE or COPY
// flushes, which also covers the (z1=1, z2=0) combination the piecewise
// definition leaves open. Boundary values are exact binaries, so equality
// comparison is the intended predicate.
template <class S>
S cell_update_scalar(S c, S f, S i, S g, S z1, S z2) {
    if (z1 == 0.0 && z2 == 1.0) return sigmoid(f) * c + sigmoid(i) * tanh(g); // UPDATE
    if (z1 == 0.0 && z2 == 0.0) return c;                                     // COPY
    return sigmoid(i) * tanh(g);                                              // FLUSH
}

template <class Real>
BroadcastKernel<Real> cell_update_kernel() {
    return BroadcastKernel<Real>(6, 1, "hmlstm_update", [](auto in, auto out) {
        out[0] = cell_update_scalar(in[0], in[1], in[2], in[3], in[4], in[5]);
    });
}

// Leaf vars plus the cell output; gradients are read back per leaf.
template <class Real>
struct CellGraph {
    Var<Real> c_prev, f, i, g, z1, z2;
    Var<Real> out;
};

template <class Real>
CellGraph<Real> cell_update_fused(Tape<Real>& tape, const CellInputs<Real>& in,
                                  MixedPolicy policy) {
    in.validate();
    CellGraph<Real> graph{tape.input(in.c_prev), tape.input(in.f), tape.input(in.i),
                          tape.input(in.g),      tape.input(in.z1), tape.input(in.z2), {}};
    const BroadcastKernel<Real> kernel = cell_update_kernel<Real>();
    graph.out = mixed_broadcast<Real>(
        tape, kernel, {graph.c_prev, graph.f, graph.i, graph.g, graph.z1, graph.z2}, policy)[0];
    return graph;
}

// Vectorized-select baseline: all three branch tensors are materialized for
// every cell, then two nested selects keyed on the boundary masks pick one.
template <class Real>
CellGraph<Real> cell_update_unfused(Tape<Real>& tape, const CellInputs<Real>& in) {
    in.validate();
    CellGraph<Real> graph{tape.input(in.c_prev), tape.input(in.f), tape.input(in.i),
                          tape.input(in.g),      tape.input(in.z1), tape.input(in.z2), {}};
    const Var<Real> sig_f = tape.prim(PrimKind::Sigmoid, {graph.f});
    const Var<Real> sig_i = tape.prim(PrimKind::Sigmoid, {graph.i});
    const Var<Real> tanh_g = tape.prim(PrimKind::Tanh, {graph.g});
    const Var<Real> keep = tape.prim(PrimKind::Mul, {sig_f, graph.c_prev});
    const Var<Real> proposal = tape.prim(PrimKind::Mul, {sig_i, tanh_g});
    const Var<Real> update = tape.prim(PrimKind::Add, {keep, proposal});
    // z1 == 0: z2 picks UPDATE over COPY; z1 == 1: FLUSH.
    const Var<Real> not_flushed = tape.prim(PrimKind::Select, {graph.z2, update, graph.c_prev});
    graph.out = tape.prim(PrimKind::Select, {graph.z1, proposal, not_flushed});
    return graph;
}

template <class Real>
struct CellGradients {
    Tensor<Real> c_prev, f, i, g;
};

enum class CellImpl {
    FusedMixedCache,
    FusedMixedRecompute,
    ReverseUnfused,
};

inline std::string cell_impl_name(CellImpl impl) {
    switch (impl) {
        case CellImpl::FusedMixedCache: return "mixed-cache";
        case CellImpl::FusedMixedRecompute: return "mixed-recompute";
        case CellImpl::ReverseUnfused: return "reverse-unfused";
    }
    return "?";
}

// d(cell output) with respect to the four matrix inputs under the given
// seed. Boundary vectors are predicates only; no gradient exists for them.
template <class Real>
CellGradients<Real> cell_gradients(CellImpl impl, const CellInputs<Real>& in,
                                   const Tensor<Real>& seed) {
    Tape<Real> tape;
    CellGraph<Real> graph;
    switch (impl) {
        case CellImpl::FusedMixedCache:
            graph = cell_update_fused(tape, in, MixedPolicy::CacheForward);
            break;
        case CellImpl::FusedMixedRecompute:
            graph = cell_update_fused(tape, in, MixedPolicy::RecomputeReverse);
            break;
        case CellImpl::ReverseUnfused:
            graph = cell_update_unfused(tape, in);
            break;
    }
    Gradients<Real> grads = tape.backward(graph.out, seed);
    return CellGradients<Real>{grads.at(graph.c_prev), grads.at(graph.f), grads.at(graph.i),
                               grads.at(graph.g)};
}

} // namespace bcad
