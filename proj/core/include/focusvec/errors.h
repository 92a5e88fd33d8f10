// Copyright 2026 The Focusvec Authors.
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

#ifndef FOCUSVEC_ERRORS_H_
#define FOCUSVEC_ERRORS_H_

#include <stdexcept>
#include <string>

namespace focusvec {

// Every error raised by the library derives from Error. The kind decides the
// process exit code used by the command line tool.
enum class ErrorKind { kContract, kDimension, kParse, kNumeric };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

// A precondition of an operation was violated by the caller.
class ContractError : public Error {
 public:
  explicit ContractError(const std::string& message)
      : Error(ErrorKind::kContract, message) {}
};

class DimensionError : public Error {
 public:
  explicit DimensionError(const std::string& message)
      : Error(ErrorKind::kDimension, message) {}
};

// Malformed input file. Carries the 1-based line number when known.
class ParseError : public Error {
 public:
  ParseError(const std::string& message, int line = 0)
      : Error(ErrorKind::kParse, message), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

// A NaN or Inf surfaced from a computation.
class NumericFailure : public Error {
 public:
  explicit NumericFailure(const std::string& message)
      : Error(ErrorKind::kNumeric, message) {}
};

inline const char* ErrorKindName(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kContract:
      return "contract";
    case ErrorKind::kDimension:
      return "dimension";
    case ErrorKind::kParse:
      return "parse";
    case ErrorKind::kNumeric:
      return "numeric";
  }
  return "unknown";
}

}  // namespace focusvec

#endif  // FOCUSVEC_ERRORS_H_
