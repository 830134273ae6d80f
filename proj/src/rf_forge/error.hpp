// Copyright 2026 The rf_forge Authors. All Rights Reserved.
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>

namespace rfforge {

enum class ErrorKind {
  kArgument,
  kConfig,
  kSchema,
  kParse,
  kData,
  kMerge,
  kShape,
  kSingular,
  kDegenerate,
  kInsufficientData,
  kRange,
  kTuning,
  kConvergence,
  kIo,
};

const char* to_string(ErrorKind kind);

// Every failure raised by the core library. The C API maps the kind onto a
// status code; the CLI maps that onto a process exit code.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// Raised by the SVR solver when the iteration budget runs out. Carries the
// worst KKT violation seen at that point.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& message, double worst_violation)
      : Error(ErrorKind::kConvergence, message),
        worst_violation_(worst_violation) {}

  double worst_violation() const noexcept { return worst_violation_; }

 private:
  double worst_violation_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

inline void require(bool condition, ErrorKind kind, const std::string& message) {
  if (!condition) throw Error(kind, message);
}

}  // namespace rfforge
