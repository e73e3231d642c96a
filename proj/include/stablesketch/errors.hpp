#pragma once

#include <stdexcept>
#include <string>

namespace stablesketch {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A parameter lies outside the mathematical domain of an operation
/// (alpha outside (0, 2], a probability outside (0, 1), ...).
class DomainError : public Error {
public:
    using Error::Error;
};

/// Numerical evaluation failed or degenerated.
class NumericalError : public Error {
public:
    using Error::Error;
};

/// A rank, row or coordinate index is out of range.
class IndexError : public Error {
public:
    using Error::Error;
};

class EmptyInputError : public Error {
public:
    using Error::Error;
};

/// Incompatible combination of otherwise valid settings, e.g. an estimator
/// spec whose alpha differs from the sketch's alpha.
class ConfigurationError : public Error {
public:
    using Error::Error;
};

/// No bias factor is available for the requested (alpha, k).
class CalibrationMissError : public Error {
public:
    using Error::Error;
};

/// Malformed file or input record.
class FormatError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

namespace detail {

inline void require_alpha(double alpha) {
    if (!(alpha > 0.0 && alpha <= 2.0)) {
        throw DomainError("alpha must lie in (0, 2], got " + std::to_string(alpha));
    }
}

inline void require_open_unit(double p, const char* name) {
    if (!(p > 0.0 && p < 1.0)) {
        throw DomainError(std::string(name) + " must lie in (0, 1), got " + std::to_string(p));
    }
}

}  // namespace detail
}  // namespace stablesketch
