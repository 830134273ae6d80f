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

#include "rf_forge/error.hpp"

namespace rfforge {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kArgument: return "argument error";
    case ErrorKind::kConfig: return "configuration error";
    case ErrorKind::kSchema: return "schema error";
    case ErrorKind::kParse: return "parse error";
    case ErrorKind::kData: return "data error";
    case ErrorKind::kMerge: return "merge error";
    case ErrorKind::kShape: return "shape error";
    case ErrorKind::kSingular: return "singular design";
    case ErrorKind::kDegenerate: return "degenerate input";
    case ErrorKind::kInsufficientData: return "insufficient data";
    case ErrorKind::kRange: return "range error";
    case ErrorKind::kTuning: return "tuning error";
    case ErrorKind::kConvergence: return "convergence error";
    case ErrorKind::kIo: return "I/O error";
  }
  return "error";
}

}  // namespace rfforge
