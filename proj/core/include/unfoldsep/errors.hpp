// Copyright 2026 The unfoldsep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <stdexcept>
#include <string>

namespace unfoldsep {

/// Base class for every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A configuration object violates its invariants.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Bad input data: shape mismatch, empty signal, malformed file.
class InputError : public Error {
 public:
  using Error::Error;
};

/// Misuse of the differentiation tape (shape mismatch, bad root, cycle).
class GraphError : public Error {
 public:
  using Error::Error;
};

/// A computation produced a non-finite value.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Training diverged; carries the stage/epoch diagnostic in what().
class TrainingError : public Error {
 public:
  using Error::Error;
};

}  // namespace unfoldsep
