#pragma once

#include <stdexcept>
#include <string>

namespace nmsim {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A dimension is < 2, operands disagree in size, or a subsystem index is out of range.
class InvalidDimension : public Error {
public:
    using Error::Error;
};

class InvalidParameter : public Error {
public:
    using Error::Error;
};

/// NaN/Inf, divergence, or a singular auxiliary denominator.
class NumericalFailure : public Error {
public:
    NumericalFailure(const std::string& what, double time = -1.0)
        : Error(what), time_(time) {}

    /// Simulation time at which the failure was detected (negative if unknown).
    double time() const noexcept { return time_; }

private:
    double time_;
};

/// The pre-normalization norm or trace drifted further than one step should allow.
class StepSizeFailure : public NumericalFailure {
public:
    using NumericalFailure::NumericalFailure;
};

/// Invalid or unknown configuration field; the message names the field.
class ConfigError : public Error {
public:
    ConfigError(const std::string& field, const std::string& message)
        : Error(field + ": " + message), field_(field) {}

    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

}  // namespace nmsim
