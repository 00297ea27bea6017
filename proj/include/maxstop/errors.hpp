#pragma once

#include <stdexcept>
#include <string>

namespace maxstop {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid model parameters or a model that cannot serve the request.
class ModelError : public Error {
public:
    using Error::Error;
};

/// Argument outside the domain of the callee (state outside (l, r), y outside F-image, ...).
class DomainError : public Error {
public:
    using Error::Error;
};

/// Reward specification inconsistent with its declared properties.
class RewardError : public Error {
public:
    using Error::Error;
};

/// The problem has infinite value (boundary growth or objective unbounded).
class ValueInfinite : public Error {
public:
    using Error::Error;
};

/// log(phi) neither strictly convex nor linear: no closed-form diagonal value.
class UnsupportedModel : public Error {
public:
    using Error::Error;
};

/// Continuation set of the one-dimensional problem is not a half-interval.
class UnsupportedStructure : public Error {
public:
    using Error::Error;
};

/// No sign change of the tangency residual in the searched bracket.
class NoTangency : public Error {
public:
    using Error::Error;
};

/// A pin lies below the function it must dominate.
class InconsistentPin : public Error {
public:
    using Error::Error;
};

/// Survival factor did not decay below the floor before the integration cap.
class TruncationError : public Error {
public:
    using Error::Error;
};

/// Configuration text could not be parsed or validated.
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what, int line = 0)
        : Error(line > 0 ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}

    int line() const noexcept { return line_; }

private:
    int line_;
};

}  // namespace maxstop
