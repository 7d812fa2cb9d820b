#pragma once

#include <stdexcept>
#include <string>

namespace mrtherm {

/// Bad user input: config schema violations, inconsistent shapes, broken
/// preconditions. CLI maps this to exit code 2.
class ValidationError : public std::runtime_error {
public:
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

/// A request that is well-formed but outside an operation's domain
/// (index out of range, infeasible line count, size cap exceeded).
/// CLI maps this to exit code 2.
class DomainError : public std::runtime_error {
public:
  explicit DomainError(const std::string& what) : std::runtime_error(what) {}
};

/// Numerical failure at runtime: solver divergence, singular inner system,
/// indefinite posterior. CLI maps this to exit code 3.
class NumericalError : public std::runtime_error {
public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace mrtherm
