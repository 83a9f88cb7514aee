#pragma once

#include <stdexcept>
#include <string>

namespace saliex {

// Base class for all library errors.
class error : public std::runtime_error {
public:
    explicit error(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid configuration: bad field values, unknown keys, impossible layer geometry.
class config_error : public error {
public:
    using error::error;
};

// Contract violation: caller passed arguments that break a documented precondition.
class contract_error : public error {
public:
    using error::error;
};

// Bad data content: malformed files, out-of-range values, corrupt checkpoints.
class data_error : public error {
public:
    using error::error;
};

// Filesystem failures.
class io_error : public error {
public:
    using error::error;
};

}  // namespace saliex
