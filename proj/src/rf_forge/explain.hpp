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

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "rf_forge/gbdt.hpp"
#include "rf_forge/matrix.hpp"
#include "rf_forge/mlr.hpp"

namespace rfforge {

struct Attribution {
  std::string method;  // "tree_shap", "kernel_shap_exact", "kernel_shap_sampled"
  double base_value = 0.0;
  Matrix values;                  // samples x features
  std::vector<double> variance;   // per feature; sampled KernelSHAP only
  size_t background_rows = 0;
  std::string background_label;   // what the background was drawn from
};

// Per-node probability of descending left when the split feature is unknown,
// from the share of background rows reaching each child. Nodes no background
// row reaches fall back to the stored training covers.
std::vector<std::vector<double>> background_left_fractions(const TreeEnsemble& model,
                                                           const Matrix& background);

// Exact path-dependent TreeSHAP with node covers taken from the background.
// base_value is the ensemble's expectation under the same covers, which is the
// mean background prediction when every node is reached.
Attribution tree_shap(const TreeEnsemble& model, const Matrix& x, const Matrix& background);

using PredictFn = std::function<std::vector<double>(const Matrix&)>;

struct KernelShapOptions {
  size_t n_coalitions = 2048;
  uint64_t seed = 0;
  size_t exact_max_features = 12;
};

// Model-agnostic Shapley estimate. Masked features take every background row
// in turn and predictions are averaged. Feature counts up to
// exact_max_features use the exact Shapley formula over all coalitions;
// larger ones solve the kernel-weighted least squares problem over sampled
// coalition pairs with the efficiency constraint imposed.
Attribution kernel_shap(const PredictFn& predict, const Matrix& background, const Matrix& x,
                        const KernelShapOptions& options = {});

struct FeatureImportance {
  std::string feature;
  size_t column = 0;
  double score = 0.0;
  std::optional<double> sign;  // corr(feature value, shap) or sign of coefficient
  size_t rank = 0;             // 1 = most important
  bool selected = true;        // linear models: entered by stepwise selection
};

struct ImportanceSummary {
  std::string method;
  std::vector<FeatureImportance> ranked;  // descending score, ties by column
};

ImportanceSummary summarize(const Attribution& attr, const Matrix& x,
                            const std::vector<std::string>& names);
ImportanceSummary summarize(const LinearModel& model);

std::string attribution_to_csv(const Attribution& attr, const std::vector<std::string>& names);
std::string summary_to_csv(const ImportanceSummary& summary);
nlohmann::json to_json(const ImportanceSummary& summary);
nlohmann::json to_json(const Attribution& attr, const std::vector<std::string>& names);

}  // namespace rfforge
