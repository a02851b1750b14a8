#pragma once

#include <stdexcept>
#include <string>

namespace mwb {

// Error categories map onto the CLI exit codes (2, 3, 4). Precondition
// violations on library calls use std::invalid_argument.

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class NotFoundError : public std::out_of_range {
public:
    using std::out_of_range::out_of_range;
};

}  // namespace mwb
