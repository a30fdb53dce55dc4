#pragma once

#include <array>
#include <atomic>
#include <cassert>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <span>
#include <vector>

#include "bcad/counters.hpp"
#include "bcad/errors.hpp"

namespace bcad {

// Widest perturbation vector a single differentiation may carry.
inline constexpr int kMaxPartials = 32;

// Identifies one differentiation invocation. Id 0 is reserved for untagged
// constants (plain literals absorbed into dual arithmetic), which combine
// with any live tag.
struct Tag {
    std::uint64_t id = 0;
    friend bool operator==(Tag, Tag) = default;
};

namespace detail {
inline std::atomic<std::uint64_t> tag_counter{1};
}

inline Tag fresh_tag() {
    return Tag{detail::tag_counter.fetch_add(1, std::memory_order_relaxed)};
}

namespace detail {

template <std::floating_point F>
F raw_sigmoid(F x) {
    // Two-branch form: never evaluates exp on a positive argument, so it
    // cannot overflow for large |x|.
    if (x >= F(0)) {
        const F e = std::exp(-x);
        return F(1) / (F(1) + e);
    }
    const F e = std::exp(x);
    return e / (F(1) + e);
}

} // namespace detail

// Counting scalar wrappers. Generic kernel bodies call these unqualified so
// the same source works on reals and duals; the transcendental counter then
// ticks identically however the kernel is evaluated.
template <std::floating_point F> F exp(F x)  { count_transcendental(); return std::exp(x); }
template <std::floating_point F> F log(F x)  { count_transcendental(); return std::log(x); }
template <std::floating_point F> F sin(F x)  { count_transcendental(); return std::sin(x); }
template <std::floating_point F> F cos(F x)  { count_transcendental(); return std::cos(x); }
template <std::floating_point F> F tanh(F x) { count_transcendental(); return std::tanh(x); }
template <std::floating_point F> F sigmoid(F x) { count_transcendental(); return detail::raw_sigmoid(x); }
template <std::floating_point F> F sqrt(F x) { return std::sqrt(x); }
template <std::floating_point F> F abs(F x)  { return std::fabs(x); }
template <std::floating_point F> F pow(F x, F c) { return std::pow(x, c); }

// Multidimensional dual number: a primal plus up to MaxWidth perturbation
// coefficients, all belonging to one tagged differentiation. Real is double
// or float, or another Dual for one level of nesting.
template <class Real, int MaxWidth = kMaxPartials>
class Dual {
public:
    using value_type = Real;
    static constexpr int max_width = MaxWidth;

    Dual() = default;
    Dual(Real value) : primal_(value) {} // NOLINT: implicit constant embedding

    Dual(Real value, int width, Tag tag) : primal_(value), width_(width), tag_(tag) {
        assert(width >= 0 && width <= MaxWidth);
        for (int i = 0; i < width_; ++i) partials_[i] = Real(0);
    }

    Real primal() const { return primal_; }
    int width() const { return width_; }
    Tag tag() const { return tag_; }
    bool is_constant() const { return tag_.id == 0; }

    Real partial(int i) const { return i < width_ ? partials_[i] : Real(0); }
    void set_partial(int i, Real v) {
        assert(i >= 0 && i < width_);
        partials_[i] = v;
    }

    // Coefficient for a specific live tag; zero for constants, TagMismatch
    // for a foreign live tag. This is the extraction primitive behind tg.
    Real partial_for(Tag tag, int i) const {
        if (is_constant()) return Real(0);
        if (tag_ != tag) throw TagMismatch("tangent extraction across distinct tags");
        return partial(i);
    }

    friend Dual operator-(const Dual& a) {
        Dual r(-a.primal_, a.width_, a.tag_);
        for (int i = 0; i < a.width_; ++i) r.partials_[i] = -a.partials_[i];
        return r;
    }

    friend Dual operator+(const Dual& a, const Dual& b) {
        Dual r = combined(a, b);
        r.primal_ = a.primal_ + b.primal_;
        for (int i = 0; i < r.width_; ++i) r.partials_[i] = a.partial(i) + b.partial(i);
        return r;
    }

    friend Dual operator-(const Dual& a, const Dual& b) {
        Dual r = combined(a, b);
        r.primal_ = a.primal_ - b.primal_;
        for (int i = 0; i < r.width_; ++i) r.partials_[i] = a.partial(i) - b.partial(i);
        return r;
    }

    friend Dual operator*(const Dual& a, const Dual& b) {
        Dual r = combined(a, b);
        r.primal_ = a.primal_ * b.primal_;
        for (int i = 0; i < r.width_; ++i)
            r.partials_[i] = a.partial(i) * b.primal_ + a.primal_ * b.partial(i);
        return r;
    }

    friend Dual operator/(const Dual& a, const Dual& b) {
        if (b.primal_ == Real(0)) throw DivisionByZero("dual division by zero primal");
        Dual r = combined(a, b);
        r.primal_ = a.primal_ / b.primal_;
        const Real denom = b.primal_ * b.primal_;
        for (int i = 0; i < r.width_; ++i)
            r.partials_[i] = (a.partial(i) * b.primal_ - a.primal_ * b.partial(i)) / denom;
        return r;
    }

    // Scalar forms avoid materializing constant duals on the hot path.
    template <class S> requires std::is_arithmetic_v<S>
    friend Dual operator+(const Dual& a, S s) { return shifted(a, static_cast<Real>(s)); }
    template <class S> requires std::is_arithmetic_v<S>
    friend Dual operator+(S s, const Dual& a) { return shifted(a, static_cast<Real>(s)); }
    template <class S> requires std::is_arithmetic_v<S>
    friend Dual operator-(const Dual& a, S s) { return shifted(a, -static_cast<Real>(s)); }
    template <class S> requires std::is_arithmetic_v<S>
    friend Dual operator-(S s, const Dual& a) { return shifted(-a, static_cast<Real>(s)); }

    template <class S> requires std::is_arithmetic_v<S>
    friend Dual operator*(const Dual& a, S s) { return scaled(a, static_cast<Real>(s)); }
    template <class S> requires std::is_arithmetic_v<S>
    friend Dual operator*(S s, const Dual& a) { return scaled(a, static_cast<Real>(s)); }

    template <class S> requires std::is_arithmetic_v<S>
    friend Dual operator/(const Dual& a, S s) {
        const Real rs = static_cast<Real>(s);
        if (rs == Real(0)) throw DivisionByZero("dual division by zero scalar");
        return scaled(a, Real(1) / rs);
    }
    template <class S> requires std::is_arithmetic_v<S>
    friend Dual operator/(S s, const Dual& b) {
        if (b.primal_ == Real(0)) throw DivisionByZero("dual division by zero primal");
        const Real rs = static_cast<Real>(s);
        Dual r(rs / b.primal_, b.width_, b.tag_);
        const Real scale = -rs / (b.primal_ * b.primal_);
        for (int i = 0; i < b.width_; ++i) r.partials_[i] = scale * b.partials_[i];
        return r;
    }

    Dual& operator+=(const Dual& b) { return *this = *this + b; }
    Dual& operator-=(const Dual& b) { return *this = *this - b; }
    Dual& operator*=(const Dual& b) { return *this = *this * b; }
    Dual& operator/=(const Dual& b) { return *this = *this / b; }

    // Comparisons act on primals only; the branch a differentiated kernel
    // takes is the branch the undifferentiated kernel would take.
    friend bool operator<(const Dual& a, const Dual& b) { return a.primal_ < b.primal_; }
    friend bool operator<=(const Dual& a, const Dual& b) { return a.primal_ <= b.primal_; }
    friend bool operator>(const Dual& a, const Dual& b) { return a.primal_ > b.primal_; }
    friend bool operator>=(const Dual& a, const Dual& b) { return a.primal_ >= b.primal_; }
    friend bool operator==(const Dual& a, const Dual& b) { return a.primal_ == b.primal_; }
    friend bool operator!=(const Dual& a, const Dual& b) { return a.primal_ != b.primal_; }

    template <class S> requires std::is_arithmetic_v<S>
    friend bool operator<(const Dual& a, S s) { return a.primal_ < static_cast<Real>(s); }
    template <class S> requires std::is_arithmetic_v<S>
    friend bool operator<=(const Dual& a, S s) { return a.primal_ <= static_cast<Real>(s); }
    template <class S> requires std::is_arithmetic_v<S>
    friend bool operator>(const Dual& a, S s) { return a.primal_ > static_cast<Real>(s); }
    template <class S> requires std::is_arithmetic_v<S>
    friend bool operator>=(const Dual& a, S s) { return a.primal_ >= static_cast<Real>(s); }
    template <class S> requires std::is_arithmetic_v<S>
    friend bool operator==(const Dual& a, S s) { return a.primal_ == static_cast<Real>(s); }
    template <class S> requires std::is_arithmetic_v<S>
    friend bool operator!=(const Dual& a, S s) { return a.primal_ != static_cast<Real>(s); }

    template <class S> requires std::is_arithmetic_v<S>
    friend bool operator<(S s, const Dual& a) { return static_cast<Real>(s) < a.primal_; }
    template <class S> requires std::is_arithmetic_v<S>
    friend bool operator<=(S s, const Dual& a) { return static_cast<Real>(s) <= a.primal_; }
    template <class S> requires std::is_arithmetic_v<S>
    friend bool operator>(S s, const Dual& a) { return static_cast<Real>(s) > a.primal_; }
    template <class S> requires std::is_arithmetic_v<S>
    friend bool operator>=(S s, const Dual& a) { return static_cast<Real>(s) >= a.primal_; }
    template <class S> requires std::is_arithmetic_v<S>
    friend bool operator==(S s, const Dual& a) { return static_cast<Real>(s) == a.primal_; }
    template <class S> requires std::is_arithmetic_v<S>
    friend bool operator!=(S s, const Dual& a) { return static_cast<Real>(s) != a.primal_; }

    // f(x + ye) = f(x) + f'(x) ye, applied coefficient-wise.
    static Dual chain(const Dual& a, Real primal, Real scale) {
        Dual r(primal, a.width_, a.tag_);
        for (int i = 0; i < a.width_; ++i) r.partials_[i] = scale * a.partials_[i];
        return r;
    }

private:
    static Dual combined(const Dual& a, const Dual& b) {
        if (a.tag_ == b.tag_) {
            assert(a.width_ == b.width_);
            return Dual(Real(0), a.width_, a.tag_);
        }
        if (a.is_constant()) return Dual(Real(0), b.width_, b.tag_);
        if (b.is_constant()) return Dual(Real(0), a.width_, a.tag_);
        throw TagMismatch("dual arithmetic across distinct tags (perturbation confusion)");
    }

    static Dual shifted(const Dual& a, Real s) {
        Dual r = a;
        r.primal_ = a.primal_ + s;
        return r;
    }

    static Dual scaled(const Dual& a, Real s) {
        Dual r(a.primal_ * s, a.width_, a.tag_);
        for (int i = 0; i < a.width_; ++i) r.partials_[i] = a.partials_[i] * s;
        return r;
    }

    Real primal_{};
    int width_ = 0;
    Tag tag_{};
    std::array<Real, MaxWidth> partials_{};
};

namespace detail {
// Dual unary rules call back into bcad:: for nested scalars so the inner
// level differentiates too, and into std:: for floating-point primals so a
// dual application counts exactly one transcendental.
template <class Real> Real inner_exp(Real x) {
    if constexpr (std::is_floating_point_v<Real>) return std::exp(x); else return exp(x);
}
template <class Real> Real inner_log(Real x) {
    if constexpr (std::is_floating_point_v<Real>) return std::log(x); else return log(x);
}
template <class Real> Real inner_sin(Real x) {
    if constexpr (std::is_floating_point_v<Real>) return std::sin(x); else return sin(x);
}
template <class Real> Real inner_cos(Real x) {
    if constexpr (std::is_floating_point_v<Real>) return std::cos(x); else return cos(x);
}
template <class Real> Real inner_tanh(Real x) {
    if constexpr (std::is_floating_point_v<Real>) return std::tanh(x); else return tanh(x);
}
template <class Real> Real inner_sigmoid(Real x) {
    if constexpr (std::is_floating_point_v<Real>) return raw_sigmoid(x); else return sigmoid(x);
}
template <class Real> Real inner_sqrt(Real x) {
    if constexpr (std::is_floating_point_v<Real>) return std::sqrt(x); else return sqrt(x);
}
template <class Real> Real inner_pow(Real x, Real c) {
    if constexpr (std::is_floating_point_v<Real>) return std::pow(x, c); else return pow(x, c);
}
template <class Real> Real inner_floor(Real x) {
    if constexpr (std::is_floating_point_v<Real>) return std::floor(x);
    else return Real(std::floor(x.primal()));
}
} // namespace detail

template <class Real, int W>
Dual<Real, W> exp(const Dual<Real, W>& a) {
    count_transcendental();
    const Real p = detail::inner_exp(a.primal());
    return Dual<Real, W>::chain(a, p, p);
}

template <class Real, int W>
Dual<Real, W> log(const Dual<Real, W>& a) {
    if (!(a.primal() > Real(0))) throw DomainError("log requires a positive primal");
    count_transcendental();
    return Dual<Real, W>::chain(a, detail::inner_log(a.primal()), Real(1) / a.primal());
}

template <class Real, int W>
Dual<Real, W> sin(const Dual<Real, W>& a) {
    count_transcendental();
    return Dual<Real, W>::chain(a, detail::inner_sin(a.primal()), detail::inner_cos(a.primal()));
}

template <class Real, int W>
Dual<Real, W> cos(const Dual<Real, W>& a) {
    count_transcendental();
    return Dual<Real, W>::chain(a, detail::inner_cos(a.primal()), -detail::inner_sin(a.primal()));
}

template <class Real, int W>
Dual<Real, W> tanh(const Dual<Real, W>& a) {
    count_transcendental();
    const Real t = detail::inner_tanh(a.primal());
    return Dual<Real, W>::chain(a, t, Real(1) - t * t);
}

template <class Real, int W>
Dual<Real, W> sigmoid(const Dual<Real, W>& a) {
    count_transcendental();
    const Real s = detail::inner_sigmoid(a.primal());
    return Dual<Real, W>::chain(a, s, s * (Real(1) - s));
}

template <class Real, int W>
Dual<Real, W> sqrt(const Dual<Real, W>& a) {
    if (a.primal() < Real(0)) throw DomainError("sqrt requires a non-negative primal");
    const Real s = detail::inner_sqrt(a.primal());
    return Dual<Real, W>::chain(a, s, Real(1) / (Real(2) * s));
}

template <class Real, int W>
Dual<Real, W> abs(const Dual<Real, W>& a) {
    if (a.primal() == Real(0))
        throw NonDifferentiablePoint("abs is not differentiable at 0");
    return a.primal() > Real(0) ? a : -a;
}

// Power by a constant exponent only; a dual exponent would need log of the base.
template <class Real, int W, class S> requires std::is_arithmetic_v<S>
Dual<Real, W> pow(const Dual<Real, W>& a, S exponent) {
    const Real c = static_cast<Real>(exponent);
    if (a.primal() < Real(0) && c != detail::inner_floor(c))
        throw DomainError("pow of a negative primal by a non-integer exponent");
    const Real p = detail::inner_pow(a.primal(), c);
    return Dual<Real, W>::chain(a, p, c * detail::inner_pow(a.primal(), c - Real(1)));
}

// Orthogonal unit seeding: result j carries primal values[j] and the unit
// perturbation vector e_j under the given tag.
template <class Real, int W = kMaxPartials>
void seed_into(std::span<const Real> values, Tag tag, std::span<Dual<Real, W>> out) {
    const int k = static_cast<int>(values.size());
    if (k < 1) throw ArityMismatch("seed requires at least one value");
    if (k > W) throw ArityMismatch("seed arity exceeds the partial-vector capacity");
    for (int j = 0; j < k; ++j) {
        out[j] = Dual<Real, W>(values[j], k, tag);
        out[j].set_partial(j, Real(1));
    }
}

template <class Real, int W = kMaxPartials>
std::vector<Dual<Real, W>> seed(std::span<const Real> values, Tag tag) {
    std::vector<Dual<Real, W>> out(values.size());
    seed_into<Real, W>(values, tag, out);
    return out;
}

// Constant embedding: zero perturbations, so the value is inert under
// differentiation but still participates with the right width and tag.
template <class Real, int W = kMaxPartials>
Dual<Real, W> lift(Real value, int width, Tag tag) {
    if (width < 1) throw ArityMismatch("lift requires width >= 1");
    if (width > W) throw ArityMismatch("lift width exceeds the partial-vector capacity");
    return Dual<Real, W>(value, width, tag);
}

// Tangent extraction: the perturbation coefficients carried for `tag`.
template <class Real, int W>
std::vector<Real> tg(const Dual<Real, W>& a, Tag tag) {
    if (a.tag() != tag) throw TagMismatch("tg across distinct tags");
    std::vector<Real> out(static_cast<std::size_t>(a.width()));
    for (int i = 0; i < a.width(); ++i) out[i] = a.partial(i);
    return out;
}

} // namespace bcad
