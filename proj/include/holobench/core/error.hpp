#pragma once

#include <stdexcept>
#include <string>

namespace holo {

// Invalid user-supplied configuration. The CLI maps this to exit code 2.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Contract violation on a domain value (shape, range, empty input).
class InvalidArgument : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class EmptyFMatrixError : public InvalidArgument {
public:
    EmptyFMatrixError() : InvalidArgument("empty f-matrix: all amplitudes are zero") {}
};

class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace holo
