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

#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "rf_forge/dataset.hpp"

namespace rfforge {

enum class TransformOrder {
  kGaussThenMinMax,  // rank-Gauss standardization, then min-max scaling
  kMinMaxOnly,       // min-max scaling of raw values
};

struct FeatureTransform {
  std::string name;
  std::vector<double> rank_table;  // sorted training values, duplicates kept

  // Derived from rank_table.
  std::vector<double> unique_values;
  std::vector<double> unique_ranks;  // average 1-based rank of each unique value
  std::vector<double> unique_gauss;  // Gauss-stage output of each unique value
  double x_min = 0.0;                // Gauss-stage output of the training minimum
  double x_max = 0.0;
};

// Train-fitted feature scaling. A value is ranked against the training rank
// table (linear interpolation between neighbours, clamped at the ends), mapped
// through the inverse normal CDF at (rank - 0.5) / N, then min-max scaled with
// the training extremes and clamped to [range_min, range_max].
class FittedTransform {
 public:
  // Fits every non-excluded column. Columns must be complete and hold at least
  // two distinct values.
  static FittedTransform fit(const DataTable& table, double range_min = 0.0,
                             double range_max = 1.0,
                             TransformOrder order = TransformOrder::kGaussThenMinMax);

  DataTable apply(const DataTable& table) const;
  double apply_value(size_t feature, double value) const;
  double gauss_stage(size_t feature, double value) const;

  // Inverse of the target column's scaling: exact inverse of min-max, then a
  // monotone piecewise-linear inverse of the Gauss stage.
  std::vector<double> invert_target(std::span<const double> scaled) const;
  double invert_value(size_t feature, double scaled) const;

  size_t feature_index(std::string_view name) const;
  size_t target_feature() const { return target_feature_; }
  const std::vector<FeatureTransform>& features() const { return features_; }
  double range_min() const { return range_min_; }
  double range_max() const { return range_max_; }
  TransformOrder order() const { return order_; }

  nlohmann::json to_json() const;
  static FittedTransform from_json(const nlohmann::json& doc);
  // FNV-1a over the serialized form; identical transforms share a fingerprint.
  std::string fingerprint() const;

 private:
  void derive(FeatureTransform& f) const;

  std::vector<FeatureTransform> features_;
  size_t target_feature_ = 0;
  double range_min_ = 0.0;
  double range_max_ = 1.0;
  TransformOrder order_ = TransformOrder::kGaussThenMinMax;
};

}  // namespace rfforge
