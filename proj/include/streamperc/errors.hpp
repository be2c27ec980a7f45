// Copyright 2026 The streamperc Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
#pragma once

#include <stdexcept>
#include <string>

namespace streamperc {

/// Root of every exception thrown by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad user data: malformed files, invariant failures on ingest, misuse of
/// an operation's preconditions. The CLI maps this family to exit code 2.
class InputError : public Error {
 public:
  using Error::Error;
};

/// A value failed a domain invariant (box extent, score range, frame size).
class ValidationError : public InputError {
 public:
  using InputError::InputError;
};

class ExtentError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class NonFiniteError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// A sequence that must be sorted (scores, timestamps) was not.
class OrderError : public InputError {
 public:
  using InputError::InputError;
};

class UnknownFrameError : public InputError {
 public:
  using InputError::InputError;
};

class EmptyDatasetError : public InputError {
 public:
  using InputError::InputError;
};

class ShapeError : public InputError {
 public:
  using InputError::InputError;
};

class StrideSetError : public InputError {
 public:
  using InputError::InputError;
};

class ExtrapolationError : public InputError {
 public:
  using InputError::InputError;
};

/// Syntax error in an input file. The message carries line/field context.
class ParseError : public InputError {
 public:
  using InputError::InputError;
};

/// Well-formed input that is missing required fields or breaks referential
/// integrity.
class SchemaError : public InputError {
 public:
  using InputError::InputError;
};

/// A class map does not cover (or cannot be resolved against) a taxonomy.
class CoverageError : public InputError {
 public:
  using InputError::InputError;
};

/// An internal invariant broke. Indicates a bug, not bad input; the CLI maps
/// it to exit code 3.
class InvariantViolation : public Error {
 public:
  using Error::Error;
};

}  // namespace streamperc
