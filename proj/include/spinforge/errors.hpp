#pragma once

#include <stdexcept>
#include <string>

namespace spinforge {

// Bad input: malformed config, unknown ids, violated preconditions.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// A computation could not produce a trustworthy number.
class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace spinforge
