#pragma once

#include <stdexcept>
#include <string>

namespace bcnn {

// Base class for all errors raised by the library.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Incompatible tensor shapes (dimension mismatches, bad kernel sizes, ...).
class ShapeError : public Error {
public:
    explicit ShapeError(const std::string& msg) : Error(msg) {}
};

// Malformed file contents (bad magic numbers, bad record sizes, ...).
class FormatError : public Error {
public:
    explicit FormatError(const std::string& msg) : Error(msg) {}
};

// A file or buffer ended before the declared payload was complete.
class LengthError : public Error {
public:
    explicit LengthError(const std::string& msg) : Error(msg) {}
};

// Two pieces of data that must agree do not (e.g. image/label counts).
class ConsistencyError : public Error {
public:
    explicit ConsistencyError(const std::string& msg) : Error(msg) {}
};

// A caller violated an API precondition.
class ContractError : public Error {
public:
    explicit ContractError(const std::string& msg) : Error(msg) {}
};

} // namespace bcnn
