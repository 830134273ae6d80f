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
#include <span>
#include <vector>

#include "json.hpp"
#include "rf_forge/matrix.hpp"

namespace rfforge {

struct GbdtParams {
  int max_depth = 6;
  double min_child_weight = 1.0;
  double learning_rate = 0.3;
  double subsample = 1.0;
  double colsample_bytree = 1.0;
  double colsample_bylevel = 1.0;
  double alpha = 0.0;
  double lambda = 1.0;
  double gamma = 0.0;
  double max_delta_step = 0.0;  // 0 = unbounded
  int n_rounds = 100;
  double base_score = 0.5;
  uint64_t seed = 0;
  // Optional; 0 disables. Requires an evaluation set passed to train_gbdt.
  int early_stopping_rounds = 0;

  bool operator==(const GbdtParams&) const = default;
};

// Tuned settings for the oil and gas recovery-factor models.
GbdtParams oil_gbdt_params();
GbdtParams gas_gbdt_params();

void validate(const GbdtParams& params);
nlohmann::json to_json(const GbdtParams& params);
GbdtParams gbdt_params_from_json(const nlohmann::json& doc, GbdtParams base = {});

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double weight = 0.0;  // leaf output before learning-rate scaling
  double cover = 0.0;   // hessian sum of training rows reaching the node
  double gain = 0.0;    // split gain net of gamma (splits only)

  bool is_leaf() const { return feature < 0; }
};

struct Tree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  double predict(std::span<const double> row) const;
  size_t leaf_index(std::span<const double> row) const;
  int depth() const;
};

struct TreeEnsemble {
  GbdtParams params;
  size_t n_features = 0;
  std::vector<Tree> trees;
  std::vector<double> train_rmse;  // after each round
  std::vector<double> eval_rmse;   // after each round, when an evaluation set was given
  int best_iteration = -1;         // set by early stopping

  double predict_row(std::span<const double> row) const;
  std::vector<double> predict(const Matrix& x) const;

  nlohmann::json to_json() const;
  static TreeEnsemble from_json(const nlohmann::json& doc);
};

struct EvalSet {
  const Matrix* x = nullptr;
  std::span<const double> y;
};

// Squared-error boosting with exact greedy level-wise split search.
TreeEnsemble train_gbdt(const Matrix& x, std::span<const double> y, const GbdtParams& params,
                        const EvalSet& eval = {});

// Gain of a candidate split; exposed for tests and diagnostics.
double split_gain(double gl, double hl, double gr, double hr, double lambda, double gamma);
double leaf_weight(double g, double h, double alpha, double lambda, double max_delta_step);

}  // namespace rfforge
