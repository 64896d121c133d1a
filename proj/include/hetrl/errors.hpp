#pragma once

#include <stdexcept>
#include <string>

namespace hetrl {

// Bad configuration: unknown option values, out-of-range parameters,
// inconsistent settings. CLI maps this to exit code 2.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed or inconsistent input data (files, trajectories, policies).
// CLI maps this to exit code 3.
class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Numerical failure: singular systems, non-finite iterates, conditioning
// beyond tolerance. CLI maps this to exit code 4.
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace hetrl
