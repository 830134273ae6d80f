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

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "json.hpp"
#include "rf_forge/dataset.hpp"
#include "rf_forge/gbdt.hpp"
#include "rf_forge/matrix.hpp"
#include "rf_forge/mlr.hpp"
#include "rf_forge/svr.hpp"

namespace rfforge {

// ---- metrics ---------------------------------------------------------------

double rmse(std::span<const double> measured, std::span<const double> estimated);

// Sample covariance over the product of sample standard deviations. Empty when
// either vector has zero variance.
std::optional<double> pearson_r(std::span<const double> measured, std::span<const double> estimated);

// 1 - SS_res / SS_tot. Throws a degenerate error for constant measured values.
double cd(std::span<const double> measured, std::span<const double> estimated);

struct EvalReport {
  std::string split;
  size_t n = 0;
  double rmse = 0.0;
  std::optional<double> cd;  // empty when the measured values are constant
  std::optional<double> r;
  double ss_res = 0.0;
  double ss_tot = 0.0;
  double cov = 0.0;
  double sd_measured = 0.0;
  double sd_estimated = 0.0;
};

EvalReport evaluate(std::span<const double> measured, std::span<const double> estimated,
                    std::string split);
nlohmann::json to_json(const EvalReport& report);

// ---- model families --------------------------------------------------------

enum class ModelFamily { kGbdt, kSvr, kMlr };

const char* to_string(ModelFamily family);
ModelFamily family_from_string(const std::string& name);

struct ModelSpec {
  ModelFamily family = ModelFamily::kGbdt;
  GbdtParams gbdt;
  SvrParams svr;
  double p_enter = 0.05;
};

// Sets one named hyperparameter of the ModelSpec's family.
ModelSpec with_param(ModelSpec spec, const std::string& name, double value);
nlohmann::json params_json(const ModelSpec& spec);

struct TrainedModel {
  ModelFamily family = ModelFamily::kGbdt;
  std::variant<TreeEnsemble, SvrModel, LinearModel> model;

  std::vector<double> predict(const Matrix& x) const;
  size_t n_features() const;
  nlohmann::json to_json() const;
  static TrainedModel from_json(const nlohmann::json& doc);
};

TrainedModel train_model(const ModelSpec& spec, const Matrix& x, std::span<const double> y,
                         std::span<const std::string> names);

// ---- grid search -----------------------------------------------------------

struct GridAxis {
  std::string name;
  std::vector<double> values;
};

struct GridSpec {
  std::vector<GridAxis> axes;
  // Axis names tuned together, in order. Empty means one stage over all axes.
  std::vector<std::vector<std::string>> stages;
};

// Candidate grids. The boosted-tree grid is staged in pairs.
GridSpec default_gbdt_grid();
GridSpec default_svr_grid();

void validate(const GridSpec& grid, ModelFamily family);

struct CvCell {
  size_t stage = 0;
  std::vector<std::pair<std::string, double>> values;  // this stage's axes
  std::vector<double> fold_rmse;
  double mean_rmse = 0.0;
  double sd_rmse = 0.0;
  bool failed = false;
  std::string error;
};

struct CvResult {
  size_t k = 0;
  std::vector<CvCell> cells;
  std::vector<size_t> stage_winners;  // index into cells per stage
  std::vector<std::pair<std::string, double>> chosen;  // accumulated winners
  ModelSpec chosen_spec;
};

// Staged grid search: each stage crosses its axes with earlier winners fixed,
// scoring cells by mean validation RMSE across folds. Failed cells are skipped;
// a stage with no surviving cell is a tuning error. Cells run on up to
// `threads` workers; results do not depend on the thread count.
CvResult grid_search_cv(const ModelSpec& base, const GridSpec& grid, const FoldPlan& folds,
                        const Matrix& x, std::span<const double> y,
                        std::span<const std::string> names, unsigned threads = 1);

// Default fold count for a training split of the given size.
size_t default_fold_count(size_t train_rows);

std::string cv_to_csv(const CvResult& result);
nlohmann::json to_json(const CvResult& result);

// ---- learning curve --------------------------------------------------------

struct CurvePoint {
  size_t size = 0;
  std::optional<double> train_rmse;
  std::optional<double> test_rmse;       // first min(size, |test|) test rows
  std::optional<double> full_test_rmse;  // extension: whole test set
  std::string error;
};

struct LearningCurve {
  size_t stride = 25;
  std::vector<CurvePoint> points;
};

std::vector<size_t> curve_sizes(size_t n_train, size_t stride);

// Trains on growing prefixes of the training rows (in their given order) and
// scores each model on the same prefix and on an equally sized test prefix.
LearningCurve learning_curve(const ModelSpec& spec, const Matrix& x_train,
                             std::span<const double> y_train, const Matrix& x_test,
                             std::span<const double> y_test, std::span<const std::string> names,
                             size_t stride = 25, unsigned threads = 1);

std::string curve_to_csv(const LearningCurve& curve);
nlohmann::json to_json(const LearningCurve& curve);

// Runs fn(i) for i in [0, count) on up to `threads` workers.
void parallel_for(size_t count, unsigned threads, const std::function<void(size_t)>& fn);

}  // namespace rfforge
