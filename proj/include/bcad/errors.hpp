#pragma once

#include <stdexcept>
#include <string>

namespace bcad {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Perturbation confusion: two duals with distinct live tags were combined.
struct TagMismatch : Error {
    using Error::Error;
};

struct DivisionByZero : Error {
    using Error::Error;
};

// Primal value outside the domain of the applied primitive (log of a
// non-positive value, sqrt of a negative value, ...).
struct DomainError : Error {
    using Error::Error;
};

// The primitive is defined but not differentiable at this primal (abs at 0).
struct NonDifferentiablePoint : Error {
    using Error::Error;
};

struct ShapeMismatch : Error {
    using Error::Error;
};

struct ArityMismatch : Error {
    using Error::Error;
};

struct SeedShapeMismatch : Error {
    using Error::Error;
};

struct UnknownPrimitive : Error {
    using Error::Error;
};

struct NonFiniteValue : Error {
    using Error::Error;
};

struct SizeGuardExceeded : Error {
    using Error::Error;
};

struct ConfigError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

struct EquivalenceFailure : Error {
    using Error::Error;
};

} // namespace bcad
