#pragma once

#include <stdexcept>
#include <string>

namespace stackcast {

/// Failure categories. The CLI maps each one to a distinct exit code.
enum class ErrorKind { Io, Validation, Numeric, Training, Ledger };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorKind::Io, what) {}
};

class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& what) : Error(ErrorKind::Validation, what) {}
};

/// Non-finite value produced by a kernel op or seen by the optimizer.
class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error(ErrorKind::Numeric, what) {}
};

class TrainingError : public Error {
 public:
  explicit TrainingError(const std::string& what) : Error(ErrorKind::Training, what) {}
};

/// Split-access policy violated (test rows read before evaluation, frozen artifacts changed).
class LedgerError : public Error {
 public:
  explicit LedgerError(const std::string& what) : Error(ErrorKind::Ledger, what) {}
};

}  // namespace stackcast
