// Copyright 2026 The hiddenkey Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace hk {

/// Incompatible tensor shapes.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A precondition of an operation was violated by the caller.
class ContractError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Division by zero, non-finite loss and similar.
class NumericError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// A row with no surviving entry reached softmax or a renormalization.
class DegeneracyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace hk
