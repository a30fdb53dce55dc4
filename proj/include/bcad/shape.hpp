#pragma once

#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "bcad/errors.hpp"

namespace bcad {

// Dense array extent. Dimensions are aligned from the FIRST axis: an
// n-vector broadcast against an n-by-m matrix varies along rows and is
// copied along columns. Shorter shapes behave as if padded with trailing
// length-1 dimensions, so a scalar, a (1), and a (1,1) are interchangeable.
class Shape {
public:
    Shape() = default; // scalar
    Shape(std::initializer_list<std::int64_t> dims) : dims_(dims) { validate(); }
    explicit Shape(std::vector<std::int64_t> dims) : dims_(std::move(dims)) { validate(); }

    int rank() const { return static_cast<int>(dims_.size()); }

    // Trailing-padding view: axes past the stored rank have length 1.
    std::int64_t dim(int axis) const {
        return axis < rank() ? dims_[static_cast<std::size_t>(axis)] : 1;
    }

    std::span<const std::int64_t> dims() const { return dims_; }

    std::int64_t volume() const {
        std::int64_t v = 1;
        for (std::int64_t d : dims_) v *= d;
        return v;
    }

    friend bool operator==(const Shape&, const Shape&) = default;

    // Equality up to trailing length-1 dimensions.
    static bool equivalent(const Shape& a, const Shape& b) {
        const int r = a.rank() > b.rank() ? a.rank() : b.rank();
        for (int k = 0; k < r; ++k)
            if (a.dim(k) != b.dim(k)) return false;
        return true;
    }

    std::string str() const {
        std::string s = "(";
        for (int k = 0; k < rank(); ++k) {
            if (k) s += ", ";
            s += std::to_string(dims_[static_cast<std::size_t>(k)]);
        }
        s += ")";
        return s;
    }

private:
    void validate() const {
        for (std::int64_t d : dims_)
            if (d < 1)
                throw ShapeMismatch("shape dimensions must be >= 1, got " + str());
    }

    std::vector<std::int64_t> dims_;
};

// Common shape of a broadcast: per axis the maximum length, valid only when
// every argument is either that length or 1 there.
inline Shape broadcast_shape(std::span<const Shape> shapes) {
    if (shapes.empty()) throw ShapeMismatch("broadcast_shape of an empty shape list");
    int rank = 0;
    for (const Shape& s : shapes) rank = s.rank() > rank ? s.rank() : rank;
    std::vector<std::int64_t> out(static_cast<std::size_t>(rank), 1);
    for (int k = 0; k < rank; ++k) {
        std::int64_t len = 1;
        for (const Shape& s : shapes) {
            const std::int64_t d = s.dim(k);
            if (d == 1) continue;
            if (len == 1) {
                len = d;
            } else if (d != len) {
                throw ShapeMismatch("broadcast shape mismatch at dim " + std::to_string(k) +
                                    ": lengths " + std::to_string(len) + " vs " + std::to_string(d));
            }
        }
        out[static_cast<std::size_t>(k)] = len;
    }
    return Shape(std::move(out));
}

inline Shape broadcast_shape(std::initializer_list<Shape> shapes) {
    return broadcast_shape(std::span<const Shape>(shapes.begin(), shapes.size()));
}

// Flat index into an argument for one output cell: length-1 axes pin to 0,
// axes past the argument's rank drop out. The argument is never expanded.
inline std::int64_t virtual_index(const Shape& arg_shape,
                                  std::span<const std::int64_t> out_index,
                                  const Shape& out_shape) {
    (void)out_shape;
    std::int64_t flat = 0;
    for (int k = 0; k < arg_shape.rank(); ++k) {
        const std::int64_t len = arg_shape.dim(k);
        const std::int64_t coord = out_index[static_cast<std::size_t>(k)] < len - 1
                                       ? out_index[static_cast<std::size_t>(k)]
                                       : len - 1;
        flat = flat * len + coord;
    }
    return flat;
}

// Decodes a flat row-major offset into a multi-index of the given shape.
inline void unflatten_index(const Shape& shape, std::int64_t flat,
                            std::span<std::int64_t> out_index) {
    for (int k = shape.rank() - 1; k >= 0; --k) {
        const std::int64_t len = shape.dim(k);
        out_index[static_cast<std::size_t>(k)] = flat % len;
        flat /= len;
    }
}

} // namespace bcad
