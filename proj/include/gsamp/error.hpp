#pragma once

#include <stdexcept>
#include <string>

namespace gsamp {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input file; carries the 1-based line number when known.
class ParseError : public Error {
public:
    ParseError(const std::string& what, long line = 0)
        : Error(line > 0 ? what + " (line " + std::to_string(line) + ")" : what), line_(line) {}
    long line() const noexcept { return line_; }

private:
    long line_;
};

class ValidationError : public Error { using Error::Error; };
class DomainError : public Error { using Error::Error; };
class IndexError : public Error { using Error::Error; };
class ShapeError : public Error { using Error::Error; };
class SizeError : public Error { using Error::Error; };
class NumericalError : public Error { using Error::Error; };
class UnsupportedError : public Error { using Error::Error; };
class InfeasibleError : public Error { using Error::Error; };

} // namespace gsamp
