#pragma once

#include <stdexcept>
#include <string>

namespace ssdg {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid hyper-parameter, flag, or architecture setting.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Operand dimensions do not agree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Sample identity bookkeeping was violated (duplicate or foreign id).
class IdentityError : public Error {
 public:
  using Error::Error;
};

/// A domain's class-representation bank still has absent rows.
class BankNotReadyError : public Error {
 public:
  using Error::Error;
};

/// Cosine similarity requested against a zero-norm vector.
class DegenerateVectorError : public Error {
 public:
  using Error::Error;
};

/// Dataset layout or tabular file does not match the expected schema.
class SchemaError : public Error {
 public:
  using Error::Error;
};

/// Checkpoint archive cannot be read or does not match the run.
class CheckpointError : public Error {
 public:
  using Error::Error;
};

/// Training hit a non-finite loss; `dump()` carries a JSON state snapshot.
class TrainingError : public Error {
 public:
  TrainingError(const std::string& what, std::string dump)
      : Error(what), dump_(std::move(dump)) {}
  const std::string& dump() const noexcept { return dump_; }

 private:
  std::string dump_;
};

}  // namespace ssdg
