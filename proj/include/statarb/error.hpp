#pragma once

#include <stdexcept>
#include <string>

namespace statarb {

// Base of every error the library raises. Callers that only care about
// "something in the pipeline failed" catch this.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed input file. Carries the 1-based line number when known.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t line)
        : Error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class DimensionError : public Error {
public:
    using Error::Error;
};

// Not enough observations for the requested estimate (window too short,
// OU+FFN history below one fold, ...).
class InsufficientDataError : public Error {
public:
    using Error::Error;
};

// Zero-variance series where a positive variance is required.
class DegenerateError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class NumericError : public Error {
public:
    using Error::Error;
};

} // namespace statarb
