#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace zosteer {

/// Root of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Zero-norm anchors, undefined rotation planes and similar geometric dead ends.
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

class ArgumentError : public Error {
 public:
  using Error::Error;
};

class LookupError : public Error {
 public:
  using Error::Error;
};

/// A peer answered, but not in the agreed wire schema.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

class OracleUnavailableError : public Error {
 public:
  using Error::Error;
};

class GeneratorUnavailableError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class DatasetError : public Error {
 public:
  using Error::Error;
};

/// One point of a batched evaluation failed; `index()` names it.
class BatchError : public Error {
 public:
  BatchError(std::size_t index, const std::string& cause)
      : Error("batch evaluation failed at index " + std::to_string(index) + ": " + cause),
        index_(index),
        cause_(cause) {}

  std::size_t index() const noexcept { return index_; }
  const std::string& cause() const noexcept { return cause_; }

 private:
  std::size_t index_;
  std::string cause_;
};

enum class Stage { generate, moderate };

inline const char* stage_name(Stage s) { return s == Stage::generate ? "generate" : "moderate"; }

/// Failure of one stage of the generate-then-moderate pipeline.
class StageError : public Error {
 public:
  StageError(Stage stage, const std::string& cause)
      : Error(std::string(stage_name(stage)) + " stage failed: " + cause), stage_(stage) {}

  Stage stage() const noexcept { return stage_; }

 private:
  Stage stage_;
};

}  // namespace zosteer
