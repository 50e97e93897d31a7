// Copyright 2026 The LGD Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace lgd {

/// Root of every error raised by the engine.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes are incompatible.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A numeric hyperparameter is out of its domain (e.g. tau <= 0).
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Input data violates an operation's precondition (non-finite value, zero row, bad index).
class InputError : public Error {
 public:
  using Error::Error;
};

/// An object is not in a state that allows the requested operation.
class StateError : public Error {
 public:
  using Error::Error;
};

/// A named entity was not found.
class LookupError : public Error {
 public:
  using Error::Error;
};

/// Configuration is malformed or inconsistent.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Synthetic world generation could not satisfy its constraints.
class GenerationError : public Error {
 public:
  using Error::Error;
};

/// Training diverged (non-finite gradient or loss).
class TrainingError : public Error {
 public:
  TrainingError(const std::string& what, std::string diagnostic_path = {})
      : Error(what), diagnostic_path_(std::move(diagnostic_path)) {}

  const std::string& diagnostic_path() const noexcept { return diagnostic_path_; }
  void set_diagnostic_path(std::string p) { diagnostic_path_ = std::move(p); }

 private:
  std::string diagnostic_path_;
};

/// Evaluation could not be carried out (e.g. a single-class probe split).
class EvalError : public Error {
 public:
  using Error::Error;
};

/// Filesystem failure; the message always names the path.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Base for malformed-file errors.
class FormatError : public Error {
 public:
  using Error::Error;
};

class BadMagicError : public FormatError {
 public:
  using FormatError::FormatError;
};

class UnsupportedVersionError : public FormatError {
 public:
  using FormatError::FormatError;
};

class UnsupportedDtypeError : public FormatError {
 public:
  using FormatError::FormatError;
};

class TruncatedFileError : public FormatError {
 public:
  using FormatError::FormatError;
};

class CrcMismatchError : public FormatError {
 public:
  using FormatError::FormatError;
};

}  // namespace lgd
