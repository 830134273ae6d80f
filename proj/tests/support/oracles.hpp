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

// Slow reference implementations used only by tests. None of them call into
// the library code they are checking.

#pragma once

#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "rf_forge/gbdt.hpp"
#include "rf_forge/matrix.hpp"
#include "rf_forge/svr.hpp"

namespace rfforge::oracle {

// ---- gbdt ----

struct Split {
  int feature = -1;  // -1: no admissible split with positive gain
  double threshold = 0.0;
  double gain = 0.0;
};

// Exhaustive search over every feature and every gap between consecutive
// distinct values (threshold at the midpoint) for the rows given. Gains within
// a relative 1e-12 of the maximum are ties, resolved to the lowest feature,
// then the lowest threshold.
Split best_split(const Matrix& x, std::span<const double> grad, std::span<const size_t> rows,
                 const GbdtParams& params);

double leaf_weight(double g, double h, double alpha, double lambda, double max_delta_step);

struct TreeCheck {
  size_t nodes_checked = 0;
  double worst_weight_error = 0.0;
  std::string mismatch;  // empty when every node agrees
};

// Replays boosting round by round against the trained trees: for each tree,
// recomputes gradients from the oracle's own running predictions and checks
// every split and leaf. Requires subsample = colsample = 1.
TreeCheck check_ensemble(const TreeEnsemble& model, const Matrix& x, std::span<const double> y);

// ---- svr ----

struct QpSolution {
  std::vector<double> beta;  // alpha - alpha*
  double objective = 0.0;    // maximized dual value
  int newton_steps = 0;
};

// Dense log-barrier interior point on the 2n-variable dual with the equality
// constraint handled through the Newton KKT system.
QpSolution solve_svr_dual(const Matrix& x, std::span<const double> y, const SvrParams& params);

// -1/2 b'Kb + y'b - eps |b|_1 with the kernel evaluated here.
double svr_objective(const Matrix& x, std::span<const double> y, std::span<const double> beta,
                     const SvrParams& params);

// Largest KKT residual of (beta, bias): free points must sit on the tube edge,
// zero points inside it, bound points outside it.
double svr_kkt_violation(const Matrix& x, std::span<const double> y, std::span<const double> beta,
                         double bias, const SvrParams& params);

// ---- shapley ----

// Shapley values by enumerating every coalition. The value of a coalition is
// the path-dependent expectation over each tree, weighting unknown branches by
// the share of background rows that reach each child.
std::vector<double> tree_shapley(const TreeEnsemble& model, const Matrix& background,
                                 std::span<const double> row, double* base = nullptr);

// Same enumeration with the interventional value: the mean prediction over the
// background rows with coalition features replaced by the explained row.
std::vector<double> interventional_shapley(const std::function<std::vector<double>(const Matrix&)>& f,
                                           const Matrix& background, std::span<const double> row,
                                           double* base = nullptr);

// ---- tests ----

// P(|T| >= |t|) by Simpson quadrature of the Student t density.
double t_two_sided_quadrature(double t, double dof);

// max |F_a - F_b| evaluated at every pooled sample point by direct counting.
double ks_statistic_ecdf(std::span<const double> a, std::span<const double> b);

// ---- files ----

std::filesystem::path fresh_dir(const std::string& name);
std::string slurp(const std::filesystem::path& path);

}  // namespace rfforge::oracle
