#pragma once

#include <ostream>
#include <span>
#include <vector>

#include "bcad/rng.hpp"
#include "bcad/shape.hpp"

namespace bcad {

// Dense row-major array of 32- or 64-bit reals. Plain value type: copyable,
// single writer, no views.
template <class T>
class Tensor {
public:
    Tensor() : data_(1, T(0)) {}
    explicit Tensor(Shape shape, T fill = T(0))
        : shape_(std::move(shape)), data_(static_cast<std::size_t>(shape_.volume()), fill) {}

    static Tensor scalar(T value) {
        Tensor t;
        t.data_[0] = value;
        return t;
    }

    static Tensor from(Shape shape, std::vector<T> data) {
        if (static_cast<std::int64_t>(data.size()) != shape.volume())
            throw ShapeMismatch("tensor data length " + std::to_string(data.size()) +
                                " does not match shape " + shape.str());
        Tensor t;
        t.shape_ = std::move(shape);
        t.data_ = std::move(data);
        return t;
    }

    const Shape& shape() const { return shape_; }
    std::int64_t volume() const { return static_cast<std::int64_t>(data_.size()); }

    std::span<T> data() { return data_; }
    std::span<const T> data() const { return data_; }

    T& operator[](std::int64_t flat) { return data_[static_cast<std::size_t>(flat)]; }
    const T& operator[](std::int64_t flat) const { return data_[static_cast<std::size_t>(flat)]; }

    T at(std::span<const std::int64_t> index) const {
        std::int64_t flat = 0;
        for (int k = 0; k < shape_.rank(); ++k)
            flat = flat * shape_.dim(k) + index[static_cast<std::size_t>(k)];
        return data_[static_cast<std::size_t>(flat)];
    }
    T at(std::initializer_list<std::int64_t> index) const {
        return at(std::span<const std::int64_t>(index.begin(), index.size()));
    }

    // Text dump: a shape line, then one CSV row per innermost slice.
    void write_csv(std::ostream& os) const {
        os << "# shape " << shape_.str() << "\n";
        const std::int64_t row = shape_.rank() > 0 ? shape_.dim(shape_.rank() - 1) : 1;
        for (std::int64_t i = 0; i < volume(); ++i) {
            os << data_[static_cast<std::size_t>(i)];
            os << ((i % row == row - 1) ? '\n' : ',');
        }
    }

private:
    Shape shape_;
    std::vector<T> data_;
};

template <class T>
Tensor<T> random_pm1(Shape shape, Rng& rng) {
    Tensor<T> t(std::move(shape));
    for (T& v : t.data()) v = static_cast<T>(rng.uniform_pm1());
    return t;
}

// Exact binary values; boundary predicates compare with == and need 0.0/1.0 bit patterns.
template <class T>
Tensor<T> random_binary(Shape shape, Rng& rng, double p_one = 0.5) {
    Tensor<T> t(std::move(shape));
    for (T& v : t.data()) v = static_cast<T>(rng.binary(p_one));
    return t;
}

} // namespace bcad
