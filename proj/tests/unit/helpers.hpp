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

#include <gtest/gtest.h>

#include <optional>
#include <string>
#include <vector>

#include "rf_forge/dataset.hpp"
#include "rf_forge/error.hpp"

namespace rfforge::testing {

// Asserts that `expr` throws rfforge::Error of the given kind.
#define EXPECT_RF_ERROR(expr, error_kind)                                          \
  do {                                                                             \
    try {                                                                          \
      (void)(expr);                                                                \
      ADD_FAILURE() << "expected " #error_kind " from " #expr;                     \
    } catch (const ::rfforge::Error& e) {                                          \
      EXPECT_EQ(e.kind(), ::rfforge::ErrorKind::error_kind) << e.what();           \
    }                                                                              \
  } while (0)

inline FeatureSchema input(const std::string& name, std::optional<double> lo = std::nullopt,
                           std::optional<double> hi = std::nullopt) {
  FeatureSchema f;
  f.name = name;
  f.role = Role::kInput;
  f.lower_bound = lo;
  f.upper_bound = hi;
  return f;
}

inline FeatureSchema target(const std::string& name = "rf") {
  FeatureSchema f;
  f.name = name;
  f.role = Role::kTarget;
  f.lower_bound = 0.0;
  f.upper_bound = 1.0;
  return f;
}

using Row = std::vector<std::optional<double>>;

inline DataTable make_table(const Schema& schema, const std::vector<Row>& rows,
                            const std::string& provenance = "t") {
  DataTable t(schema);
  for (const auto& r : rows) t.append_row(r, provenance);
  return t;
}

}  // namespace rfforge::testing
