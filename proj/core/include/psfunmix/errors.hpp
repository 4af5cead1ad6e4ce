#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace psfunmix {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A shape parameter fell outside the kernel family's domain.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Malformed or inconsistent caller input (bad sizes, NaNs, negative widths).
class InputError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(what + " (line " + std::to_string(line) + ")"), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A required input (table entry, estimate) was not provided.
class DependencyError : public Error {
 public:
  using Error::Error;
};

/// Near rank deficiency in a least-squares system.
class ConditioningError : public Error {
 public:
  ConditioningError(const std::string& what, int first, int second)
      : Error(what), first_(first), second_(second) {}
  int first() const noexcept { return first_; }
  int second() const noexcept { return second_; }

 private:
  int first_;
  int second_;
};

/// An infinite series hit its truncation cap while the last term was still
/// significant. Carries the partial sum accumulated so far.
class NonConvergentSeries : public Error {
 public:
  NonConvergentSeries(const std::string& what, double partial_sum)
      : Error(what), partial_sum_(partial_sum) {}
  double partial_sum() const noexcept { return partial_sum_; }

 private:
  double partial_sum_;
};

class FeasibilityError : public Error {
 public:
  using Error::Error;
};

class OutOfBasinError : public Error {
 public:
  using Error::Error;
};

/// The solver loss blew up. Carries the loss trace up to the failure.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, std::vector<double> trace)
      : Error(what), trace_(std::move(trace)) {}
  const std::vector<double>& trace() const noexcept { return trace_; }

 private:
  std::vector<double> trace_;
};

}  // namespace psfunmix
