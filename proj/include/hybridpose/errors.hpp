#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace hybridpose {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Non-finite numeric input.
class DomainError : public Error {
public:
    using Error::Error;
};

/// A value violates a type invariant such as orthonormality.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// An angle lies outside the binned range.
class RangeError : public Error {
public:
    using Error::Error;
};

/// Caller misuse such as mismatched lengths or empty inputs.
class UsageError : public Error {
public:
    using Error::Error;
};

/// Inconsistent configuration, e.g. bin counts that do not divide.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Training produced a non-finite loss or parameter.
class TrainingError : public Error {
public:
    using Error::Error;
};

/// Malformed text input. Line and column are 1-based; column 0 means "whole line".
class ParseError : public Error {
public:
    ParseError(std::string message, std::size_t line, std::size_t column = 0)
        : Error(format(message, line, column)), line_(line), column_(column) {}

    std::size_t line() const noexcept { return line_; }
    std::size_t column() const noexcept { return column_; }

private:
    static std::string format(const std::string& message, std::size_t line, std::size_t column) {
        std::string out = "line " + std::to_string(line);
        if (column != 0) out += ", column " + std::to_string(column);
        return out + ": " + message;
    }

    std::size_t line_;
    std::size_t column_;
};

} // namespace hybridpose
