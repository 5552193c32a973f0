#pragma once

#include <stdexcept>
#include <string>

namespace capnmpc {

/// Inconsistent problem description: dimension mismatches, invalid
/// covariances, bad configuration values.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// A numerical evaluation produced non-finite values.
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace capnmpc
