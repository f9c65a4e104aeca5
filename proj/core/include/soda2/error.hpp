#pragma once

#include <stdexcept>
#include <string>

namespace soda2 {

// File/byte-level problems (bad magic, truncated payload, non-finite values).
struct FormatError : std::runtime_error {
    explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor shape disagreements between operands.
struct ShapeError : std::invalid_argument {
    explicit ShapeError(const std::string& msg) : std::invalid_argument(msg) {}
};

// Degenerate numeric input (constant band, all-identical samples, zero-norm feature).
struct ValueError : std::invalid_argument {
    explicit ValueError(const std::string& msg) : std::invalid_argument(msg) {}
};

// Bad run configuration (missing paths, invalid hyperparameters).
struct ConfigError : std::invalid_argument {
    explicit ConfigError(const std::string& msg) : std::invalid_argument(msg) {}
};

// Non-finite loss during training; names the offending term.
struct DivergenceError : std::runtime_error {
    explicit DivergenceError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace soda2
