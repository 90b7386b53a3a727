#pragma once

#include <stdexcept>
#include <string>

namespace advchar {

// Broad failure classes. The CLI maps these onto process exit codes.
enum class ErrorKind { kConfig, kData, kNumerical };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what)
      : Error(ErrorKind::kConfig, what) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& what)
      : Error(ErrorKind::kData, what) {}
};

class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& what)
      : Error(ErrorKind::kNumerical, what) {}
};

class FileNotFoundError : public DataError {
 public:
  using DataError::DataError;
};

class InvalidTokenError : public DataError {
 public:
  using DataError::DataError;
};

class InputTooLongError : public DataError {
 public:
  using DataError::DataError;
};

class ShapeError : public DataError {
 public:
  using DataError::DataError;
};

class InvariantViolationError : public DataError {
 public:
  using DataError::DataError;
};

class UndefinedMetricError : public DataError {
 public:
  using DataError::DataError;
};

// Checkpoint loading failures.
class CheckpointError : public DataError {
 public:
  using DataError::DataError;
};

class MagicMismatchError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

class VersionMismatchError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

class TruncatedCheckpointError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

class TensorShapeError : public CheckpointError {
 public:
  TensorShapeError(std::string tensor, const std::string& what)
      : CheckpointError(what), tensor_(std::move(tensor)) {}
  const std::string& tensor() const noexcept { return tensor_; }

 private:
  std::string tensor_;
};

}  // namespace advchar
