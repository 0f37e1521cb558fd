#pragma once

#include <stdexcept>
#include <string>

namespace cgmatch {

// Input that violates an operation's precondition (bad dimensions, bad ids,
// non-finite values).
class InvalidInput : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Configuration that can never produce a valid run (T = 0, lo > hi, ...).
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Internal state that should be impossible: mismatched caches, out-of-order
// training phases.
class ConsistencyError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

// Non-finite loss or gradient during training.
class DivergenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace cgmatch
