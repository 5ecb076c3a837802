// Copyright 2026 The qborn Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

/**
 * @file errors.hpp
 * @brief Exception hierarchy shared by every qborn module.
 */

#ifndef QBORN_ERRORS_HPP
#define QBORN_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace qborn {

/// Root of all qborn failures.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A gate angle was missing, superfluous or otherwise malformed.
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// A qubit, bit or parameter index is out of range.
class IndexError : public Error {
 public:
  using Error::Error;
};

/// The request exceeds a dense-simulation size cap.
class CapacityError : public Error {
 public:
  using Error::Error;
};

/// Two operands have incompatible dimensions.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Post-selection on an (almost) impossible outcome.
class DegeneratePostselectionError : public Error {
 public:
  using Error::Error;
};

/// A circuit violates the structural rules of an IQP transformation.
class CircuitError : public Error {
 public:
  using Error::Error;
};

/// Malformed text input. Carries the 1-based line number when known.
class ParseError : public Error {
 public:
  ParseError(int line, const std::string& what)
      : Error(line > 0 ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
  int line() const noexcept { return line_; }

 private:
  int line_;
};

/// Invalid or inconsistent training configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace qborn

#endif  // QBORN_ERRORS_HPP
