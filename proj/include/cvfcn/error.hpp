#pragma once

#include <stdexcept>
#include <string>

namespace cvfcn {

/// Broad failure categories. Each maps onto one CLI exit code.
enum class ErrorKind {
  Config,     // bad option, bad hyperparameter, domain violation of an argument
  Data,       // shape, format, label or covariance problems in inputs
  Numerical,  // NaN/Inf, threshold breach
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

  int exit_code() const noexcept {
    switch (kind_) {
      case ErrorKind::Config: return 1;
      case ErrorKind::Data: return 2;
      case ErrorKind::Numerical: return 3;
    }
    return 1;
  }

 private:
  ErrorKind kind_;
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& w) : Error(ErrorKind::Config, w) {}
};
struct DomainError : Error {
  explicit DomainError(const std::string& w) : Error(ErrorKind::Config, w) {}
};
struct ShapeError : Error {
  explicit ShapeError(const std::string& w) : Error(ErrorKind::Data, w) {}
};
struct FormatError : Error {
  explicit FormatError(const std::string& w) : Error(ErrorKind::Data, w) {}
};
struct LabelError : Error {
  explicit LabelError(const std::string& w) : Error(ErrorKind::Data, w) {}
};
struct CovarianceError : Error {
  explicit CovarianceError(const std::string& w) : Error(ErrorKind::Data, w) {}
};
/// Batch statistics cannot be formed (e.g. one element per channel).
struct DegenerateStatisticsError : Error {
  explicit DegenerateStatisticsError(const std::string& w) : Error(ErrorKind::Data, w) {}
};
/// Nothing to compute over: no labeled pixels in a batch, empty evaluation set.
struct EmptyError : Error {
  explicit EmptyError(const std::string& w) : Error(ErrorKind::Data, w) {}
};
struct NumericalError : Error {
  explicit NumericalError(const std::string& w) : Error(ErrorKind::Numerical, w) {}
};

/// Raised when a backward call receives a cache or gradient that does not
/// belong to the forward it claims to differentiate.
struct ContractViolation : Error {
  explicit ContractViolation(const std::string& w) : Error(ErrorKind::Data, w) {}
};

}  // namespace cvfcn
