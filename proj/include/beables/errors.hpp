#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace beables {

enum class ErrorKind {
  InvalidParameter,
  IntegrationFailure,
  NumericFailure,
  DegenerateTrajectory,
  NotPositiveSemidefinite,
  DomainError,
  QuadratureFailure,
  UnsupportedRegime,
  DegenerateEnsemble,
  FitError,
  ConfigError,
  IoError,
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// Raised by factor_kernel when an eigenvalue falls below -psd_floor.
class NotPsdError : public Error {
 public:
  NotPsdError(double eigenvalue, const std::string& what)
      : Error(ErrorKind::NotPositiveSemidefinite, what), eigenvalue_(eigenvalue) {}
  double eigenvalue() const noexcept { return eigenvalue_; }

 private:
  double eigenvalue_;
};

// Raised when a log-linear fit has R^2 below the acceptance threshold.
// Carries the data that was fitted.
class FitError : public Error {
 public:
  FitError(std::string what, std::vector<double> x, std::vector<double> y, double r2)
      : Error(ErrorKind::FitError, what), x_(std::move(x)), y_(std::move(y)), r2_(r2) {}
  const std::vector<double>& x() const noexcept { return x_; }
  const std::vector<double>& y() const noexcept { return y_; }
  double r_squared() const noexcept { return r2_; }

 private:
  std::vector<double> x_, y_;
  double r2_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool condition, const std::string& what) {
  if (!condition) throw Error(ErrorKind::InvalidParameter, what);
}

}  // namespace beables
