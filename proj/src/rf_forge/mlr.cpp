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

#include "rf_forge/mlr.hpp"

#include <Eigen/Dense>
#include <cmath>

#include "rf_forge/stats.hpp"

namespace rfforge {

namespace {

constexpr int kFormatVersion = 1;
constexpr double kRankThreshold = 1e-10;
constexpr double kExactFitRatio = 1e-20;

std::string column_label(size_t j, std::span<const std::string> names) {
  return j < names.size() ? "\"" + names[j] + "\"" : "column " + std::to_string(j);
}

double rmse_of(std::span<const double> pred, std::span<const double> y) {
  double sum = 0.0;
  for (size_t i = 0; i < y.size(); ++i) sum += (pred[i] - y[i]) * (pred[i] - y[i]);
  return std::sqrt(sum / static_cast<double>(y.size()));
}

}  // namespace

OlsFit fit_ols(const Matrix& x, std::span<const double> y, std::span<const std::string> names) {
  const size_t n = x.rows();
  const size_t p = x.cols();
  require(y.size() == n, ErrorKind::kShape, "ols target length does not match row count");
  require(n > p + 1, ErrorKind::kInsufficientData,
          "ols needs more than " + std::to_string(p + 1) + " rows, got " + std::to_string(n));

  Eigen::MatrixXd a(n, p + 1);
  Eigen::VectorXd b(n);
  for (size_t i = 0; i < n; ++i) {
    a(static_cast<Eigen::Index>(i), 0) = 1.0;
    for (size_t j = 0; j < p; ++j)
      a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j + 1)) = x(i, j);
    b(static_cast<Eigen::Index>(i)) = y[i];
  }
  for (Eigen::Index k = 0; k < a.size(); ++k)
    require(std::isfinite(a.data()[k]), ErrorKind::kData, "ols design contains a non-finite value");

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
  qr.setThreshold(kRankThreshold);
  const auto rank = static_cast<size_t>(qr.rank());
  if (rank < p + 1) {
    std::string dependent;
    const auto& perm = qr.colsPermutation().indices();
    for (size_t k = rank; k < p + 1; ++k) {
      const auto col = static_cast<size_t>(perm(static_cast<Eigen::Index>(k)));
      if (!dependent.empty()) dependent += ", ";
      dependent += col == 0 ? std::string("intercept") : column_label(col - 1, names);
    }
    fail(ErrorKind::kSingular, "singular design: linearly dependent columns " + dependent);
  }

  const Eigen::VectorXd beta = qr.solve(b);
  const Eigen::VectorXd resid = b - a * beta;
  OlsFit fit;
  fit.rss = resid.squaredNorm();
  fit.dof = n - p - 1;
  fit.sigma2 = fit.rss / static_cast<double>(fit.dof);

  const auto q = static_cast<Eigen::Index>(p + 1);
  const Eigen::MatrixXd r = qr.matrixR().topLeftCorner(q, q).triangularView<Eigen::Upper>();
  const Eigen::MatrixXd r_inv =
      r.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(q, q));
  Eigen::VectorXd var_diag(q);
  const auto& perm = qr.colsPermutation().indices();
  for (Eigen::Index k = 0; k < q; ++k) var_diag(perm(k)) = r_inv.row(k).squaredNorm();

  fit.intercept = beta(0);
  fit.intercept_se = std::sqrt(fit.sigma2 * var_diag(0));
  for (size_t j = 0; j < p; ++j) {
    const auto k = static_cast<Eigen::Index>(j + 1);
    const double coef = beta(k);
    const double se = std::sqrt(fit.sigma2 * var_diag(k));
    double t = 0.0;
    if (se > 0.0) t = coef / se;
    else if (coef != 0.0) t = coef > 0.0 ? INFINITY : -INFINITY;
    fit.coefficients.push_back(coef);
    fit.std_errors.push_back(se);
    fit.t_stats.push_back(t);
    fit.p_values.push_back(stats::student_t_two_sided(t, static_cast<double>(fit.dof)));
  }
  return fit;
}

std::optional<double> LinearModel::coefficient(std::string_view feature) const {
  for (size_t s = 0; s < selected.size(); ++s)
    if (feature_names[selected[s]] == feature) return coefficients[s];
  return std::nullopt;
}

double LinearModel::predict_row(std::span<const double> row) const {
  double out = intercept;
  for (size_t s = 0; s < selected.size(); ++s) out += coefficients[s] * row[selected[s]];
  return out;
}

std::vector<double> LinearModel::predict(const Matrix& x) const {
  require(x.cols() == feature_names.size(), ErrorKind::kShape,
          "linear model expects " + std::to_string(feature_names.size()) + " features, got " +
              std::to_string(x.cols()));
  std::vector<double> out(x.rows());
  for (size_t r = 0; r < x.rows(); ++r) out[r] = predict_row(x.row(r));
  return out;
}

LinearModel forward_stepwise(const Matrix& x, std::span<const double> y,
                             std::span<const std::string> names, double p_enter) {
  require(p_enter > 0.0 && p_enter <= 1.0, ErrorKind::kArgument, "p_enter must lie in (0, 1]");
  require(names.size() == x.cols(), ErrorKind::kShape, "one name per candidate column is required");
  require(y.size() == x.rows() && !y.empty(), ErrorKind::kShape,
          "stepwise target length does not match row count");

  LinearModel model;
  model.feature_names.assign(names.begin(), names.end());
  model.p_enter = p_enter;
  model.intercept = stats::mean(y);
  {
    std::vector<double> flat(y.size(), model.intercept);
    model.intercept_only_rmse = rmse_of(flat, y);
  }
  double tss = 0.0;
  for (double v : y) tss += (v - model.intercept) * (v - model.intercept);

  std::vector<bool> used(x.cols(), false);
  std::vector<size_t> selected;
  double current_rss = tss;
  while (current_rss > kExactFitRatio * tss) {
    std::optional<size_t> best;
    double best_p = INFINITY;
    double best_t = 0.0;
    double best_rss = 0.0;
    for (size_t c = 0; c < x.cols(); ++c) {
      if (used[c]) continue;
      auto cols = selected;
      cols.push_back(c);
      OlsFit fit;
      try {
        fit = fit_ols(x.select_cols(cols), y);
      } catch (const Error& e) {
        if (e.kind() == ErrorKind::kSingular || e.kind() == ErrorKind::kInsufficientData) continue;
        throw;
      }
      const double pv = fit.p_values.back();
      const double tv = fit.t_stats.back();
      if (!(pv < p_enter)) continue;
      if (!best || pv < best_p || (pv == best_p && std::abs(tv) > std::abs(best_t))) {
        best = c;
        best_p = pv;
        best_t = tv;
        best_rss = fit.rss;
      }
    }
    if (!best) break;
    used[*best] = true;
    selected.push_back(*best);
    current_rss = best_rss;
    model.trace.push_back({names[*best], *best, best_t, best_p,
                           std::sqrt(best_rss / static_cast<double>(y.size()))});
  }

  model.selected = selected;
  if (!selected.empty()) {
    const auto fit = fit_ols(x.select_cols(selected), y);
    model.intercept = fit.intercept;
    model.coefficients = fit.coefficients;
    model.p_values = fit.p_values;
  }
  return model;
}

nlohmann::json LinearModel::to_json() const {
  nlohmann::json trace_json = nlohmann::json::array();
  for (const auto& s : trace)
    trace_json.push_back({{"feature", s.feature},
                          {"column", s.column},
                          {"t", s.t_stat},
                          {"p", s.p_value},
                          {"train_rmse", s.train_rmse}});
  nlohmann::json coefs = nlohmann::json::array();
  for (size_t s = 0; s < selected.size(); ++s)
    coefs.push_back({{"feature", feature_names[selected[s]]},
                     {"column", selected[s]},
                     {"coefficient", coefficients[s]},
                     {"p", p_values[s]}});
  return {{"format", "rf_forge.mlr"},
          {"version", kFormatVersion},
          {"feature_names", feature_names},
          {"intercept", intercept},
          {"p_enter", p_enter},
          {"intercept_only_rmse", intercept_only_rmse},
          {"coefficients", coefs},
          {"selection_trace", trace_json}};
}

LinearModel LinearModel::from_json(const nlohmann::json& doc) {
  LinearModel model;
  try {
    require(doc.at("format") == "rf_forge.mlr", ErrorKind::kData, "not a linear model document");
    require(doc.at("version").get<int>() == kFormatVersion, ErrorKind::kData,
            "unsupported linear model version");
    model.feature_names = doc.at("feature_names").get<std::vector<std::string>>();
    model.intercept = doc.at("intercept").get<double>();
    model.p_enter = doc.at("p_enter").get<double>();
    model.intercept_only_rmse = doc.at("intercept_only_rmse").get<double>();
    for (const auto& c : doc.at("coefficients")) {
      const auto col = c.at("column").get<size_t>();
      require(col < model.feature_names.size(), ErrorKind::kData, "coefficient column out of range");
      model.selected.push_back(col);
      model.coefficients.push_back(c.at("coefficient").get<double>());
      model.p_values.push_back(c.at("p").get<double>());
    }
    for (const auto& s : doc.at("selection_trace"))
      model.trace.push_back({s.at("feature").get<std::string>(), s.at("column").get<size_t>(),
                             s.at("t").get<double>(), s.at("p").get<double>(),
                             s.at("train_rmse").get<double>()});
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kData, std::string("malformed linear model document: ") + e.what());
  }
  return model;
}

}  // namespace rfforge
