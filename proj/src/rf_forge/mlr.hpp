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
#include "rf_forge/matrix.hpp"

namespace rfforge {

struct OlsFit {
  double intercept = 0.0;
  double intercept_se = 0.0;
  std::vector<double> coefficients;
  std::vector<double> std_errors;
  std::vector<double> t_stats;
  std::vector<double> p_values;
  double rss = 0.0;
  double sigma2 = 0.0;  // unbiased residual variance
  size_t dof = 0;       // n - p - 1
};

// Least squares with an intercept via column-pivoted Householder QR. Columns
// are named in the singular-design error when names are given.
OlsFit fit_ols(const Matrix& x, std::span<const double> y,
               std::span<const std::string> names = {});

struct SelectionStep {
  std::string feature;
  size_t column = 0;
  double t_stat = 0.0;
  double p_value = 0.0;
  double train_rmse = 0.0;  // of the model after this entry
};

struct LinearModel {
  std::vector<std::string> feature_names;  // candidate columns, in input order
  double intercept = 0.0;
  std::vector<size_t> selected;            // candidate indices, entry order
  std::vector<double> coefficients;        // aligned with selected
  std::vector<double> p_values;            // final refit, aligned with selected
  std::vector<SelectionStep> trace;
  double p_enter = 0.05;
  double intercept_only_rmse = 0.0;

  std::optional<double> coefficient(std::string_view feature) const;
  double predict_row(std::span<const double> row) const;
  std::vector<double> predict(const Matrix& x) const;

  nlohmann::json to_json() const;
  static LinearModel from_json(const nlohmann::json& doc);
};

// Forward selection: each step adds the candidate whose single-addition
// p-value is smallest and below p_enter (ties: larger |t|, then column order).
// Stops early once the current model reproduces y exactly.
LinearModel forward_stepwise(const Matrix& x, std::span<const double> y,
                             std::span<const std::string> names, double p_enter = 0.05);

}  // namespace rfforge
