// Copyright 2026 The evlm-toy Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace evlm {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand extents disagree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// A precondition the caller was responsible for was violated.
class ContractError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class SequenceError : public Error {
 public:
  using Error::Error;
};

// NaN or Inf escaped an operation.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace evlm
