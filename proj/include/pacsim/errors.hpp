// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>

namespace pacsim {

// Base class for everything the simulator can throw. Violations are not
// errors: they are ordinary return values of the checkers.
class SimError : public std::runtime_error {
 public:
  explicit SimError(const std::string& what) : std::runtime_error(what) {}
};

// Address or seal does not fit its bit field.
class CodecRangeError : public SimError {
 public:
  using SimError::SimError;
};

// Metadata table exhausted (all candidate birthmarks collide or the table
// holds 2^24 - 1 live entries).
class TableFullError : public SimError {
 public:
  using SimError::SimError;
};

// A machine-level bug: clearing an empty slot, mutating a frozen global
// map, double initialization. Never raised by target-program behavior.
class InternalError : public SimError {
 public:
  using SimError::SimError;
};

// Bad allocation request (size zero, oversize, region exhausted).
class AllocError : public SimError {
 public:
  using SimError::SimError;
};

// Malformed runtime value during IR execution (gep on a non-pointer,
// exhausted input queue, ...). Distinct from a safety violation.
class ExecError : public SimError {
 public:
  using SimError::SimError;
};

// Syntax error in a textual IR file.
class ParseError : public SimError {
 public:
  ParseError(int line, int column, const std::string& msg)
      : SimError("parse error at " + std::to_string(line) + ":" +
                 std::to_string(column) + ": " + msg),
        line(line),
        column(column) {}

  int line;
  int column;
};

// Structural rule broken: SSA, def-before-use, literal loop bounds.
class ValidateError : public SimError {
 public:
  using SimError::SimError;
};

}  // namespace pacsim
