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
#include <vector>

#include "json.hpp"
#include "rf_forge/matrix.hpp"

namespace rfforge {

enum class KernelKind { kRbf, kLinear };

struct SvrParams {
  double c = 1.0;
  double epsilon = 0.1;
  double gamma = 1.0;
  KernelKind kernel = KernelKind::kRbf;
  double tol = 1e-3;
  // Iteration budget, in multiples of the 2n dual variables.
  int max_passes = 1000;
  double cache_mb = 256.0;

  bool operator==(const SvrParams&) const = default;
};

SvrParams oil_svr_params();
SvrParams gas_svr_params();

void validate(const SvrParams& params);
nlohmann::json to_json(const SvrParams& params);
SvrParams svr_params_from_json(const nlohmann::json& doc, SvrParams base = {});

double rbf_kernel(std::span<const double> a, std::span<const double> b, double gamma);
double linear_kernel(std::span<const double> a, std::span<const double> b);
double kernel_value(const SvrParams& params, std::span<const double> a, std::span<const double> b);

struct SvrModel {
  SvrParams params;
  size_t n_features = 0;
  Matrix support_vectors;
  std::vector<double> dual_coefficients;  // beta = alpha - alpha*, nonzero only
  std::vector<size_t> support_indices;    // training row of each support vector
  double bias = 0.0;
  // Solver report.
  long long iterations = 0;
  double final_gap = 0.0;  // maximal violating pair gap at exit
  double objective = 0.0;  // dual objective at exit

  double predict_row(std::span<const double> row) const;
  std::vector<double> predict(const Matrix& x) const;

  // Dense dual vector over n training rows.
  std::vector<double> dense_beta(size_t n_rows) const;

  nlohmann::json to_json() const;
  static SvrModel from_json(const nlohmann::json& doc);
};

// epsilon-SVR dual solved by SMO with maximal-violating-pair selection and an
// LRU kernel-row cache. Throws ConvergenceError when the budget runs out.
SvrModel train_svr(const Matrix& x, std::span<const double> y, const SvrParams& params);

// -1/2 b'Kb - eps |b|_1 + y'b for a dense dual vector.
double svr_dual_objective(const Matrix& x, std::span<const double> y, std::span<const double> beta,
                          const SvrParams& params);

// Worst violation of the primal-dual optimality conditions, evaluated from
// scratch from beta and bias: residual r = y - f(x) must satisfy |r| <= eps for
// beta = 0, r = eps (-eps) for free positive (negative) beta, and r >= eps
// (r <= -eps) at the upper (lower) box bound.
double kkt_violation(const Matrix& x, std::span<const double> y, std::span<const double> beta,
                     double bias, const SvrParams& params);

}  // namespace rfforge
