#include "beables/errors.hpp"

namespace beables {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidParameter: return "invalid-parameter";
    case ErrorKind::IntegrationFailure: return "integration-failure";
    case ErrorKind::NumericFailure: return "numeric-failure";
    case ErrorKind::DegenerateTrajectory: return "degenerate-trajectory";
    case ErrorKind::NotPositiveSemidefinite: return "not-positive-semidefinite";
    case ErrorKind::DomainError: return "domain-error";
    case ErrorKind::QuadratureFailure: return "quadrature-failure";
    case ErrorKind::UnsupportedRegime: return "unsupported-regime";
    case ErrorKind::DegenerateEnsemble: return "degenerate-ensemble";
    case ErrorKind::FitError: return "fit-error";
    case ErrorKind::ConfigError: return "config-error";
    case ErrorKind::IoError: return "io-error";
  }
  return "unknown";
}

}  // namespace beables
