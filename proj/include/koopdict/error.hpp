#pragma once

#include <stdexcept>
#include <string>

namespace koopdict {

/// Base for every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad arguments: shape mismatches, out-of-range parameters, empty inputs.
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// Non-finite values, divergence, overflow.
class NumericError : public Error {
public:
    using Error::Error;
};

/// Malformed or inconsistent experiment configuration.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// A pipeline stage failed; carries the stage name.
class StageError : public Error {
public:
    StageError(std::string stage, const std::string& what, bool numeric)
        : Error(stage + ": " + what), stage_(std::move(stage)), numeric_(numeric) {}

    const std::string& stage() const noexcept { return stage_; }
    bool numeric() const noexcept { return numeric_; }

private:
    std::string stage_;
    bool numeric_;
};

}  // namespace koopdict
