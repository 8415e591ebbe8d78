#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace camfit {

// Base for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Tensor extents or model dimensions do not line up.
class ShapeError : public Error {
public:
    using Error::Error;
};

// Input data violates a domain invariant (non-orthonormal rotation, singular K, ...).
class ValidationError : public Error {
public:
    using Error::Error;
};

// Caller broke a documented precondition (non-scalar loss, unnormalized trajectory, ...).
class ContractError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

// Text parse failure with the 1-based line it occurred on.
class ParseError : public Error {
public:
    ParseError(std::size_t line, const std::string& what)
        : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class ChecksumError : public IoError {
public:
    using IoError::IoError;
};

class ConfigMismatch : public Error {
public:
    using Error::Error;
};

}  // namespace camfit
