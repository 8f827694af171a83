// Copyright 2026 The qdrec Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace qdrec {

/// Base for all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Unknown id or key.
class LookupError : public Error {
 public:
  using Error::Error;
};

/// Invalid argument or configuration (CLI exit code 1).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Malformed file content; carries the 1-based offending line.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// File could not be opened/written (CLI exit code 2).
class IoError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf detected in a forward or backward pass.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace qdrec
