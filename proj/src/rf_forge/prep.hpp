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

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "rf_forge/dataset.hpp"

namespace rfforge {

DataTable drop_missing_target(const DataTable& table);

// Drops every row holding a missing cell in any non-excluded column. Used on
// independent databases, which are never imputed.
DataTable drop_incomplete_rows(const DataTable& table);

// Outlier capping. A side of a feature's range resolves to, in order: an
// explicit override, the schema bound (when use_schema_bounds), then the
// configured percentile of the feature's present values.
struct CapPolicy {
  bool use_schema_bounds = true;
  std::optional<double> lower_percentile;  // in [0, 100]
  std::optional<double> upper_percentile;
  std::map<std::string, std::pair<std::optional<double>, std::optional<double>>> overrides;
  bool include_target = true;
};

struct ResolvedBound {
  std::string feature;
  double lower;
  double upper;
  std::string lower_source;  // "schema", "percentile", "override", "none"
  std::string upper_source;
  size_t rows_removed;
};

struct CapResult {
  DataTable table;
  std::vector<ResolvedBound> bounds;
};

// Removes rows whose present values fall outside the resolved bounds.
CapResult cap_features(const DataTable& table, const CapPolicy& policy);

// Applies already-resolved bounds (e.g. recorded from the training database).
DataTable apply_bounds(const DataTable& table, std::span<const ResolvedBound> bounds);

constexpr double kDefaultSparseThreshold = 0.55;

// Drops rows whose missing fraction over input features is strictly greater
// than the threshold.
DataTable drop_sparse_rows(const DataTable& table, double max_missing_fraction);

struct ImputePlan {
  size_t base_window = 10;
  double max_missing_ratio = 0.1;
  std::string sort_key;  // empty = the schema target
};

struct ImputeWindow {
  size_t begin;  // positions in target-sorted order, half open
  size_t end;
  size_t missing;
  std::optional<double> mode;
  bool terminal_violation = false;
};

struct FeatureImputeAudit {
  std::string feature;
  std::vector<ImputeWindow> windows;
  size_t imputed = 0;
};

struct ImputeAudit {
  ImputePlan plan;
  std::vector<FeatureImputeAudit> features;
  std::vector<std::string> warnings;
};

struct ImputeResult {
  DataTable table;
  ImputeAudit audit;
};

// Windowed mode imputation. Rows are ordered by the sort key (ascending,
// stable); each feature column is cut into consecutive windows of base_window
// rows, each grown until missing/total <= max_missing_ratio, with a short tail
// merged into the preceding window. Missing cells take the mode of the present
// values of their window (ties: smallest value). Output rows keep the input
// order.
ImputeResult windowed_mode_impute(const DataTable& table, const ImputePlan& plan);

// Window boundaries for one column's missing mask (in sorted order). Exposed
// for testing the extension rule directly.
std::vector<ImputeWindow> plan_windows(std::span<const uint8_t> missing, const ImputePlan& plan);

// Mode of values, ties to the smallest value.
double mode_smallest(std::vector<double> values);

// Spearman rank correlation with average ranks for ties.
double spearman_rho(std::span<const double> x, std::span<const double> y);

struct ScreenPair {
  std::string a;
  std::string b;
  std::optional<double> rho;
  std::string error;
};

struct ScreenReport {
  std::vector<ScreenPair> pairs;
  std::vector<std::string> dropped;
  double threshold = 0.0;
};

// Pairwise Spearman screen over input features. For each pair at or above the
// threshold (absolute), the feature with more missing cells is marked dropped,
// ties going to the later schema column; pairs already covered by a drop are
// skipped. The report only marks columns; callers decide whether to drop them.
ScreenReport screen_collinear(const DataTable& table, double threshold);

nlohmann::json to_json(const ImputeAudit& audit);
nlohmann::json to_json(const ScreenReport& report);
nlohmann::json to_json(std::span<const ResolvedBound> bounds);
std::vector<ResolvedBound> bounds_from_json(const nlohmann::json& doc);

}  // namespace rfforge
