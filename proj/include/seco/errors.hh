#pragma once

#include <stdexcept>
#include <string>

namespace seco {

// Error taxonomy shared by all modules. The CLI maps anything derived from
// std::runtime_error to exit code 1; usage problems are handled separately.

struct ValidationError : std::runtime_error {
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ParseError : std::runtime_error {
    explicit ParseError(const std::string& msg) : std::runtime_error(msg) {}
};

struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

struct FormatError : std::runtime_error {
    explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

struct CompatibilityError : std::runtime_error {
    explicit CompatibilityError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace seco
