// Copyright (c) 2026 volreg contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace volreg {

/// Base class for all errors thrown by this library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A precondition on an argument was violated.
class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// A binary payload (grid file, weights file) could not be decoded.
class DecodeError : public Error {
 public:
  enum class Kind { bad_magic, bad_version, bad_header, truncated, non_finite };

  DecodeError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

/// File could not be opened / written.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Tensor/vector shapes do not match the operation's contract.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A corner's neighborhood does not fit inside its grid.
class ExcludedCornerError : public Error {
 public:
  using Error::Error;
};

/// A training set cannot be formed (e.g. fewer than two corners).
class DatasetError : public Error {
 public:
  using Error::Error;
};

/// A point sample is degenerate (collinear/coincident) for a model fit.
class DegenerateSampleError : public Error {
 public:
  using Error::Error;
};

/// Not enough data to run the estimator at all.
class InsufficientDataError : public Error {
 public:
  using Error::Error;
};

}  // namespace volreg
