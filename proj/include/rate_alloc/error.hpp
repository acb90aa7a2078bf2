#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace rate_alloc {

// Base for every error the library raises. The CLI maps subclasses onto exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Bad input data or arguments (exit code 2).
class InputError : public Error {
public:
    using Error::Error;
};

// Infeasible allocation problem (exit code 4).
class InfeasibleError : public Error {
public:
    using Error::Error;
};

// Broken internal guarantee, e.g. an iteration cap was hit (exit code 1).
class InternalError : public Error {
public:
    using Error::Error;
};

class PgmError : public InputError {
public:
    enum class Kind { unsupported_magic, malformed_header, truncated_payload, bad_sample };

    PgmError(Kind kind, std::size_t offset, const std::string& what)
        : InputError(what + " (byte offset " + std::to_string(offset) + ")"),
          kind_(kind), offset_(offset) {}

    Kind kind() const noexcept { return kind_; }
    std::size_t offset() const noexcept { return offset_; }

private:
    Kind kind_;
    std::size_t offset_;
};

}  // namespace rate_alloc
