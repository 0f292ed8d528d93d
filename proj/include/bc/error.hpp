#pragma once

#include <stdexcept>
#include <string>

namespace bc {

// Shape/contract violations (mismatched dimensions, non-scalar backward root).
struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Math domain violations (log of a negative, sigma^2 <= 0, ...).
struct DomainError : std::domain_error {
    using std::domain_error::domain_error;
};

// File parsing / serialization failures.
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Non-finite losses or gradients during optimization.
struct TrainError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace bc
