#pragma once

#include <stdexcept>
#include <string>

namespace e2p {

// Error taxonomy. The CLI maps these to exit codes:
// ConfigError -> 2, DataError -> 3, ContractError -> 4.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Violation of an internal contract (frozen-weight breach, non-scalar
// backward root, ...). These indicate a bug or a tampered artifact.
struct ContractError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Shape/index misuse inside the math stack.
struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

} // namespace e2p
