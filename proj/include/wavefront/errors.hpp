#pragma once

#include <stdexcept>
#include <string>

namespace wavefront {

/// Argument outside the mathematical domain of a formula (z outside [0,1], s >= t, ...).
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// A documented precondition of an operation does not hold.
class PreconditionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Invalid configuration value. `field()` names the offending key path, e.g. `scheme.dt`.
class ConfigError : public std::invalid_argument {
public:
    ConfigError(std::string field, const std::string& what)
        : std::invalid_argument(field + ": " + what), field_(std::move(field)) {}
    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

/// The interface escaped the co-moving window (left edge no longer identically 1 at shift time).
class WindowTooSmall : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class CapacityError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class EstimationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class SearchExhausted : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class RangeError : public std::out_of_range {
public:
    using std::out_of_range::out_of_range;
};

} // namespace wavefront
