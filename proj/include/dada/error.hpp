#pragma once

#include <stdexcept>
#include <string>

namespace dada {

// Shape disagreement between tensors (matmul inner extents, concat sides, ...).
struct DimensionError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Value outside the mathematical domain of an operation (log of <= 0, label out of range).
struct DomainError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Invalid static configuration (zero-width layer, negative weight, bad spec).
struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// API misuse (backward on a non-scalar, empty batch, frozen-model violation).
struct UsageError : std::logic_error {
    using std::logic_error::logic_error;
};

// Malformed input file (bad magic, truncation, inconsistent lengths).
struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Filesystem failure (unwritable path, missing file).
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace dada
