#ifndef ROBUST_DESIGN_ERRORS_HPP
#define ROBUST_DESIGN_ERRORS_HPP

#include <cstddef>
#include <stdexcept>
#include <string>

namespace robust_design {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An argument violates a documented precondition or type invariant.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Z^T D Z is not positive definite: the weighted support does not span the
/// model's column space. `pivot` is the Cholesky pivot where factorization
/// broke down.
class SingularInformation : public Error {
 public:
  SingularInformation(const std::string& what, std::size_t pivot)
      : Error(what), pivot_(pivot) {}
  std::size_t pivot() const noexcept { return pivot_; }

 private:
  std::size_t pivot_;
};

/// The design (or missingness model) cannot produce a usable fit, e.g. all
/// missing patterns singular or most Monte-Carlo draws singular.
class InfeasibleProblem : public Error {
 public:
  using Error::Error;
};

/// Malformed or inconsistent problem configuration / input file.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace robust_design

#endif  // ROBUST_DESIGN_ERRORS_HPP
