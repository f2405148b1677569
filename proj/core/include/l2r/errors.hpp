#pragma once

#include <stdexcept>
#include <string>

namespace l2r {

// Incompatible tensor shapes (reports both shapes in the message).
struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Input outside the mathematical domain of an op (e.g. log of x <= 0).
struct DomainError : std::domain_error {
    using std::domain_error::domain_error;
};

// API contract violated by the caller (missing grad, non-scalar loss, ...).
struct ContractError : std::logic_error {
    using std::logic_error::logic_error;
};

// Invalid configuration value.
struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Malformed external input (JSONL records, vocab files).
struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Runtime failure of a training run (e.g. divergence).
struct RunError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace l2r
