#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "bcad/broadcast.hpp"
#include "bcad/tensor.hpp"

namespace bcad {

// Tensor-level primitive vocabulary of the reverse-mode baseline, mirroring
// a compiled-graph style of expression: eager elementwise ops plus a
// vectorized select that consumes both branches.
enum class PrimKind {
    Input,
    Add,
    Sub,
    Mul,
    Sigmoid,
    Tanh,
    Select,
    SumOverDims,
    Custom,
};

template <class Real>
class Tape;

// Handle to one output slot of one recorded node.
template <class Real>
struct Var {
    Tape<Real>* tape = nullptr;
    int node = -1;
    int slot = 0;
};

template <class Real>
class Gradients {
public:
    using TensorT = Tensor<Real>;

    bool contains(Var<Real> v) const { return v.slot == 0 && by_node_.count(v.node) > 0; }

    const TensorT& at(Var<Real> v) const {
        auto it = by_node_.find(v.node);
        if (v.slot != 0 || it == by_node_.end())
            throw Error("gradient requested for a non-input var");
        return it->second;
    }

    void insert(int node, TensorT grad) { by_node_.emplace(node, std::move(grad)); }

private:
    std::unordered_map<int, TensorT> by_node_;
};

// Append-only record of a forward computation plus the adjoint sweep over
// it. Nodes reference strictly earlier nodes, so one reverse iteration
// visits consumers before producers. Single-threaded by contract; run
// independent tapes on independent threads.
template <class Real>
class Tape {
public:
    using TensorT = Tensor<Real>;
    using BackwardFn = std::function<void(Tape&, int node)>;

    Var<Real> input(TensorT value) {
        const std::int64_t bytes = value_bytes(value);
        nodes_.push_back(Node{PrimKind::Input, {}, {std::move(value)}, {}, {}, {}, nullptr, {}});
        nodes_.back().adjoints.resize(1);
        note_retained(bytes);
        input_nodes_.push_back(last_index());
        return Var<Real>{this, last_index(), 0};
    }

    Var<Real> prim(PrimKind kind, std::span<const Var<Real>> ins) {
        check_vars(ins);
        switch (kind) {
            case PrimKind::Add:
                return binary(kind, ins, [](Real a, Real b) { return a + b; });
            case PrimKind::Sub:
                return binary(kind, ins, [](Real a, Real b) { return a - b; });
            case PrimKind::Mul:
                return binary(kind, ins, [](Real a, Real b) { return a * b; });
            case PrimKind::Sigmoid:
                return unary(kind, ins, [](Real a) { return sigmoid(a); });
            case PrimKind::Tanh:
                return unary(kind, ins, [](Real a) { return tanh(a); });
            case PrimKind::Select: {
                if (ins.size() != 3) throw ArityMismatch("select takes (predicate, a, b)");
                TensorT out = tensor_zip3(value(ins[0]), value(ins[1]), value(ins[2]),
                                          [](Real p, Real a, Real b) { return p != Real(0) ? a : b; });
                return push(kind, ins, std::move(out));
            }
            case PrimKind::SumOverDims: {
                // Without explicit axes: total sum, all axes kept at length 1.
                if (ins.size() != 1) throw ArityMismatch("sum takes one input");
                std::vector<int> axes(static_cast<std::size_t>(value(ins[0]).shape().rank()));
                for (std::size_t k = 0; k < axes.size(); ++k) axes[k] = static_cast<int>(k);
                return sum_over_dims(ins[0], axes);
            }
            default:
                throw UnknownPrimitive("prim kind " +
                                       std::to_string(static_cast<int>(kind)) +
                                       " is not a recordable primitive");
        }
    }

    Var<Real> prim(PrimKind kind, std::initializer_list<Var<Real>> ins) {
        return prim(kind, std::span<const Var<Real>>(ins.begin(), ins.size()));
    }

    Var<Real> sum_over_dims(Var<Real> a, std::vector<int> axes) {
        const std::array<Var<Real>, 1> one{a};
        check_vars(one);
        TensorT out = reduce_sum_keepdims(value(a), axes);
        const std::array<Var<Real>, 1> ins{a};
        Var<Real> v = push(PrimKind::SumOverDims, std::span<const Var<Real>>(ins), std::move(out));
        nodes_[static_cast<std::size_t>(v.node)].axes = std::move(axes);
        return v;
    }

    // Extension point for fused primitives: one node, possibly several
    // outputs, a caller-supplied adjoint rule, and caller-declared retained
    // cache bytes (tensors that must survive until the reverse sweep).
    std::vector<Var<Real>> append_custom(std::string label, std::span<const Var<Real>> ins,
                                         std::vector<TensorT> values, std::vector<TensorT> cache,
                                         BackwardFn backward) {
        check_vars(ins);
        std::int64_t bytes = 0;
        for (const TensorT& t : values) bytes += value_bytes(t);
        for (const TensorT& t : cache) bytes += value_bytes(t);
        Node node{PrimKind::Custom, std::vector<Var<Real>>(ins.begin(), ins.end()),
                  std::move(values), std::move(cache), {}, {}, std::move(backward),
                  std::move(label)};
        node.adjoints.resize(node.values.size());
        nodes_.push_back(std::move(node));
        note_retained(bytes);
        std::vector<Var<Real>> outs;
        for (int s = 0; s < static_cast<int>(nodes_.back().values.size()); ++s)
            outs.push_back(Var<Real>{this, last_index(), s});
        return outs;
    }

    std::size_t size() const { return nodes_.size(); }

    const TensorT& value(Var<Real> v) const {
        return nodes_[static_cast<std::size_t>(v.node)].values[static_cast<std::size_t>(v.slot)];
    }

    std::span<const Var<Real>> node_inputs(int node) const {
        return nodes_[static_cast<std::size_t>(node)].inputs;
    }

    PrimKind node_kind(int node) const { return nodes_[static_cast<std::size_t>(node)].kind; }

    std::span<const TensorT> node_cache(int node) const {
        return nodes_[static_cast<std::size_t>(node)].cache;
    }

    // Adjoint accumulated so far for a slot; null when no contribution has
    // flowed (treated as zero everywhere).
    const TensorT* adjoint_or_null(int node, int slot) const {
        const auto& a = nodes_[static_cast<std::size_t>(node)].adjoints[static_cast<std::size_t>(slot)];
        return a ? &*a : nullptr;
    }

    // The one broadcast-adjoint rule: every primitive funnels its input
    // contributions through here, which sum-reduces over axes the input did
    // not actually have.
    void accumulate_adjoint(Var<Real> target, const TensorT& contribution) {
        auto& slot = nodes_[static_cast<std::size_t>(target.node)].adjoints[static_cast<std::size_t>(target.slot)];
        if (!slot) slot.emplace(value(target).shape());
        scatter_add(*slot, contribution);
    }

    Gradients<Real> backward(Var<Real> output, TensorT seed) {
        const std::array<std::pair<Var<Real>, TensorT>, 1> seeds{
            std::make_pair(output, std::move(seed))};
        return backward(std::span<const std::pair<Var<Real>, TensorT>>(seeds));
    }

    Gradients<Real> backward(std::span<const std::pair<Var<Real>, TensorT>> seeds) {
        for (auto& node : nodes_)
            for (auto& adj : node.adjoints) adj.reset();
        for (const auto& [var, seed] : seeds) {
            const std::array<Var<Real>, 1> one{var};
            check_vars(one);
            if (!Shape::equivalent(seed.shape(), value(var).shape()))
                throw SeedShapeMismatch("seed shape " + seed.shape().str() +
                                        " does not match output shape " +
                                        value(var).shape().str());
            accumulate_adjoint(var, seed);
        }
        for (int r = last_index(); r >= 0; --r) backward_step(r);

        Gradients<Real> grads;
        for (int node : input_nodes_) {
            const TensorT* adj = adjoint_or_null(node, 0);
            grads.insert(node, adj ? *adj : TensorT(nodes_[static_cast<std::size_t>(node)].values[0].shape()));
        }
        return grads;
    }

    // Forward-retained bytes: input copies, node outputs, and fused-node
    // caches. Reverse-pass scratch does not count; it is freed immediately.
    std::int64_t peak_cached_bytes() const { return peak_retained_bytes_; }

    TensorT debug_adjoint(Var<Real> v) const {
        const TensorT* adj = adjoint_or_null(v.node, v.slot);
        return adj ? *adj : TensorT(value(v).shape());
    }

private:
    struct Node {
        PrimKind kind;
        std::vector<Var<Real>> inputs;
        std::vector<TensorT> values;
        std::vector<TensorT> cache;                    // retained for the reverse sweep
        std::vector<std::optional<TensorT>> adjoints;  // one per output slot
        std::vector<int> axes;                         // SumOverDims only
        BackwardFn custom_backward;
        std::string label;
    };

    int last_index() const { return static_cast<int>(nodes_.size()) - 1; }

    static std::int64_t value_bytes(const TensorT& t) {
        return t.volume() * static_cast<std::int64_t>(sizeof(Real));
    }

    void note_retained(std::int64_t bytes) {
        retained_bytes_ += bytes;
        if (retained_bytes_ > peak_retained_bytes_) peak_retained_bytes_ = retained_bytes_;
    }

    void check_vars(std::span<const Var<Real>> vars) const {
        for (const Var<Real>& v : vars)
            if (v.tape != this || v.node < 0 || v.node > last_index())
                throw Error("var does not refer to a live node of this tape");
    }

    template <class F>
    Var<Real> binary(PrimKind kind, std::span<const Var<Real>> ins, F f) {
        if (ins.size() != 2) throw ArityMismatch("binary primitive takes two inputs");
        TensorT out = tensor_zip(value(ins[0]), value(ins[1]), f);
        return push(kind, ins, std::move(out));
    }

    template <class F>
    Var<Real> unary(PrimKind kind, std::span<const Var<Real>> ins, F f) {
        if (ins.size() != 1) throw ArityMismatch("unary primitive takes one input");
        TensorT out = tensor_map(value(ins[0]), f);
        return push(kind, ins, std::move(out));
    }

    Var<Real> push(PrimKind kind, std::span<const Var<Real>> ins, TensorT out) {
        const std::int64_t bytes = value_bytes(out);
        Node node{kind, std::vector<Var<Real>>(ins.begin(), ins.end()), {}, {}, {}, {}, nullptr, {}};
        node.values.push_back(std::move(out));
        node.adjoints.resize(1);
        nodes_.push_back(std::move(node));
        note_retained(bytes);
        return Var<Real>{this, last_index(), 0};
    }

    void backward_step(int r) {
        Node& node = nodes_[static_cast<std::size_t>(r)];
        if (node.kind == PrimKind::Custom) {
            bool any = false;
            for (const auto& adj : node.adjoints) any = any || adj.has_value();
            if (any && node.custom_backward) node.custom_backward(*this, r);
            return;
        }
        if (node.kind == PrimKind::Input) return;
        if (!node.adjoints[0]) return;
        const TensorT& w = *node.adjoints[0];
        switch (node.kind) {
            case PrimKind::Add:
                accumulate_adjoint(node.inputs[0], w);
                accumulate_adjoint(node.inputs[1], w);
                break;
            case PrimKind::Sub:
                accumulate_adjoint(node.inputs[0], w);
                accumulate_adjoint(node.inputs[1], tensor_map(w, [](Real g) { return -g; }));
                break;
            case PrimKind::Mul:
                accumulate_adjoint(node.inputs[0],
                                   tensor_zip(w, value(node.inputs[1]), [](Real g, Real o) { return g * o; }));
                accumulate_adjoint(node.inputs[1],
                                   tensor_zip(w, value(node.inputs[0]), [](Real g, Real o) { return g * o; }));
                break;
            case PrimKind::Sigmoid: {
                const TensorT& s = node.values[0];
                accumulate_adjoint(node.inputs[0],
                                   tensor_zip(w, s, [](Real g, Real v) { return g * v * (Real(1) - v); }));
                break;
            }
            case PrimKind::Tanh: {
                const TensorT& t = node.values[0];
                accumulate_adjoint(node.inputs[0],
                                   tensor_zip(w, t, [](Real g, Real v) { return g * (Real(1) - v * v); }));
                break;
            }
            case PrimKind::Select: {
                // No gradient flows to the predicate.
                const TensorT& p = value(node.inputs[0]);
                accumulate_adjoint(node.inputs[1],
                                   tensor_zip(w, p, [](Real g, Real q) { return q != Real(0) ? g : Real(0); }));
                accumulate_adjoint(node.inputs[2],
                                   tensor_zip(w, p, [](Real g, Real q) { return q != Real(0) ? Real(0) : g; }));
                break;
            }
            case PrimKind::SumOverDims:
                // Adjoint of a keepdims sum is a broadcast; the central rule
                // expands w across the summed axes.
                accumulate_adjoint(node.inputs[0], w);
                break;
            default:
                throw UnknownPrimitive("no backward rule for prim kind " +
                                       std::to_string(static_cast<int>(node.kind)));
        }
    }

    std::vector<Node> nodes_;
    std::vector<int> input_nodes_;
    std::int64_t retained_bytes_ = 0;
    std::int64_t peak_retained_bytes_ = 0;
};

} // namespace bcad
