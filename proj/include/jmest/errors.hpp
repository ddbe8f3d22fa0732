#pragma once

#include <stdexcept>
#include <string>

namespace jmest {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operands of mismatched qubit count or matrix dimension.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Malformed input text. Carries the 1-based line number when known (0 otherwise).
class ParseError : public Error {
 public:
  explicit ParseError(const std::string& what, std::size_t line = 0)
      : Error(line == 0 ? what : "line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Visibilities whose per-qubit sum of squares exceeds one.
class IncompatibleVisibilities : public Error {
 public:
  using Error::Error;
};

/// A Hamiltonian term with zero visibility cannot be estimated.
class UnestimableTerm : public Error {
 public:
  using Error::Error;
};

/// Request exceeds a documented size cap.
class CapabilityError : public Error {
 public:
  using Error::Error;
};

/// Conic solver could not certify feasibility or infeasibility.
class SolverIndeterminate : public Error {
 public:
  using Error::Error;
};

}  // namespace jmest
