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

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "rf_forge/dataset.hpp"

namespace rfforge {

struct TTestResult {
  double t = 0.0;
  double p = 1.0;
  double dof = 0.0;  // Welch-Satterthwaite
};

// Unequal-variance two-sample t-test, two-sided.
TTestResult welch_t_test(std::span<const double> a, std::span<const double> b);

struct KsResult {
  double statistic = 0.0;
  double d_crit = 0.0;
  double p = 1.0;
};

// Two-sample Kolmogorov-Smirnov test. The critical value is
// c(alpha) sqrt((na + nb) / (na nb)) with c(alpha) = sqrt(-ln(alpha / 2) / 2);
// p is the asymptotic Kolmogorov tail at (sqrt(ne) + 0.12 + 0.11 / sqrt(ne)) D.
KsResult ks_two_sample(std::span<const double> a, std::span<const double> b, double alpha = 0.05);

double ks_critical_coefficient(double alpha);

struct ColumnShift {
  std::string column;
  size_t n_a = 0;
  size_t n_b = 0;
  std::optional<TTestResult> t_test;
  std::optional<KsResult> ks;
  bool same_mean = false;          // t-test p > alpha
  bool same_distribution = false;  // KS p > alpha
  std::string error;               // set when a test could not be computed
};

enum class ShiftVerdict { kCompatible, kIncompatible, kInconclusive };

const char* to_string(ShiftVerdict verdict);

struct ShiftReport {
  std::string label_a;
  std::string label_b;
  double alpha = 0.05;
  std::vector<ColumnShift> columns;
  ShiftVerdict verdict = ShiftVerdict::kCompatible;
};

// One Welch t-test and one KS test per column. Columns must exist in both
// tables; missing cells are skipped. The verdict is compatible iff every
// column passes both tests, inconclusive if any test failed to run.
ShiftReport audit(const DataTable& a, const DataTable& b, std::span<const std::string> columns,
                  double alpha = 0.05, std::string label_a = "train", std::string label_b = "other");

// Every non-excluded column shared by the two tables, in the first table's order.
std::vector<std::string> audit_columns(const DataTable& a, const DataTable& b);

std::string shift_to_csv(const ShiftReport& report);
nlohmann::json to_json(const ShiftReport& report);

}  // namespace rfforge
