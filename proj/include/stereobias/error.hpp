#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace stereobias {

/// Raised when inputs violate an operation's preconditions.
class InvalidInput : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Raised while reading a file; carries the path and 1-based line number
/// (0 when the problem is not tied to a line).
class ParseError : public InvalidInput {
public:
    ParseError(std::string path, std::size_t line, const std::string& what)
        : InvalidInput(format(path, line, what)), path_(std::move(path)), line_(line) {}

    const std::string& path() const noexcept { return path_; }
    std::size_t line() const noexcept { return line_; }

private:
    static std::string format(const std::string& path, std::size_t line, const std::string& what) {
        if (line == 0) return path + ": " + what;
        return path + ":" + std::to_string(line) + ": " + what;
    }

    std::string path_;
    std::size_t line_;
};

/// Raised when a statistic is mathematically undefined for the given data.
class Undefined : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

}  // namespace stereobias
