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

#include <cmath>
#include <numeric>

#include "helpers.hpp"
#include "oracles.hpp"
#include "rf_forge/explain.hpp"
#include "rf_forge/gbdt.hpp"
#include "rf_forge/mlr.hpp"
#include "rf_forge/prep.hpp"
#include "rf_forge/rng.hpp"
#include "rf_forge/shift_audit.hpp"
#include "rf_forge/svr.hpp"

namespace rfforge {
namespace {

Matrix random_matrix(size_t n, size_t m, Rng& rng) {
  Matrix x(n, m);
  for (size_t i = 0; i < n; ++i)
    for (size_t j = 0; j < m; ++j) x(i, j) = rng.uniform();
  return x;
}

// ---- TreeSHAP ----

TEST(TreeShap, SingleLeafGivesZeroAttributions) {
  Rng rng(1);
  const auto x = random_matrix(10, 3, rng);
  const std::vector<double> y(10, 0.7);
  GbdtParams p;
  p.n_rounds = 2;
  const auto m = train_gbdt(x, y, p);
  const auto a = tree_shap(m, x, x);
  for (double v : a.values.data()) EXPECT_EQ(v, 0.0);
  EXPECT_NEAR(a.base_value, m.predict_row(x.row(0)), 1e-15);
}

TEST(TreeShap, StumpOnOneFeature) {
  Rng rng(2);
  auto x = random_matrix(40, 3, rng);
  std::vector<double> y(40);
  for (size_t i = 0; i < 40; ++i) y[i] = x(i, 2) > 0.5 ? 1.0 : 0.0;
  GbdtParams p;
  p.n_rounds = 1;
  p.max_depth = 1;
  const auto m = train_gbdt(x, y, p);
  ASSERT_EQ(m.trees[0].nodes[0].feature, 2);
  const auto a = tree_shap(m, x, x);
  const auto pred = m.predict(x);
  for (size_t r = 0; r < 40; ++r) {
    EXPECT_EQ(a.values(r, 0), 0.0);
    EXPECT_EQ(a.values(r, 1), 0.0);
    EXPECT_NEAR(a.values(r, 2), pred[r] - a.base_value, 1e-12);
  }
}

TEST(TreeShap, MatchesEnumerationOracle) {
  Rng rng(3);
  const auto x = random_matrix(60, 4, rng);
  std::vector<double> y(60);
  for (size_t i = 0; i < 60; ++i) y[i] = x(i, 0) * x(i, 1) + x(i, 3) + 0.05 * rng.normal();
  GbdtParams p;
  p.max_depth = 4;
  p.n_rounds = 5;
  const auto m = train_gbdt(x, y, p);
  const auto a = tree_shap(m, x, x);
  for (size_t r = 0; r < 60; r += 7) {
    double base = 0;
    const auto phi = oracle::tree_shapley(m, x, x.row(r), &base);
    for (size_t j = 0; j < 4; ++j) EXPECT_NEAR(a.values(r, j), phi[j], 1e-9);
  }
}

TEST(TreeShap, FeatureCountMismatchIsShapeError) {
  Rng rng(4);
  const auto x = random_matrix(10, 2, rng);
  std::vector<double> y(10, 0.1);
  y[0] = 0.9;
  const auto m = train_gbdt(x, y, GbdtParams{});
  EXPECT_RF_ERROR(tree_shap(m, Matrix(1, 3), x), kShape);
}

// ---- KernelSHAP ----

TEST(KernelShap, AdditiveModelExact) {
  const std::vector<double> a{0.5, -2.0, 3.0};
  const PredictFn f = [&](const Matrix& z) {
    std::vector<double> out(z.rows());
    for (size_t i = 0; i < z.rows(); ++i)
      for (size_t j = 0; j < 3; ++j) out[i] += a[j] * z(i, j);
    return out;
  };
  const Matrix bg(1, 3, std::vector<double>{0.1, 0.2, 0.3});
  const Matrix x(1, 3, std::vector<double>{1.0, 1.5, -1.0});
  const auto attr = kernel_shap(f, bg, x);
  for (size_t j = 0; j < 3; ++j) EXPECT_NEAR(attr.values(0, j), a[j] * (x(0, j) - bg(0, j)), 1e-12);
}

TEST(KernelShap, ConstantPredictorGivesZero) {
  const PredictFn f = [](const Matrix& z) { return std::vector<double>(z.rows(), 4.2); };
  Rng rng(5);
  const auto bg = random_matrix(5, 4, rng);
  const auto attr = kernel_shap(f, bg, random_matrix(3, 4, rng));
  for (double v : attr.values.data()) EXPECT_NEAR(v, 0.0, 1e-12);
}

TEST(KernelShap, SixPointSvrMatchesEnumeration) {
  SvrParams p;
  p.c = 10;
  p.epsilon = 0.01;
  Rng rng(6);
  const auto x = random_matrix(6, 3, rng);
  std::vector<double> y(6);
  for (size_t i = 0; i < 6; ++i) y[i] = x(i, 0) + 0.5 * x(i, 2);
  const auto m = train_svr(x, y, p);
  const PredictFn f = [&](const Matrix& z) { return m.predict(z); };
  const auto attr = kernel_shap(f, x, x);
  const auto pred = m.predict(x);
  for (size_t r = 0; r < 6; ++r) {
    const auto phi = oracle::interventional_shapley(f, x, x.row(r));
    double sum = attr.base_value;
    for (size_t j = 0; j < 3; ++j) {
      EXPECT_NEAR(attr.values(r, j), phi[j], 1e-6);
      sum += attr.values(r, j);
    }
    EXPECT_NEAR(sum, pred[r], 1e-6);
  }
}

TEST(KernelShap, SampledModeKeepsLocalAccuracy) {
  Rng rng(7);
  const auto bg = random_matrix(8, 8, rng);
  const PredictFn f = [](const Matrix& z) {
    std::vector<double> out(z.rows());
    for (size_t i = 0; i < z.rows(); ++i) out[i] = std::sin(z(i, 0)) * z(i, 1) + z(i, 5) * z(i, 6);
    return out;
  };
  KernelShapOptions opt;
  opt.exact_max_features = 4;
  opt.n_coalitions = 200;
  const auto x = random_matrix(4, 8, rng);
  const auto attr = kernel_shap(f, bg, x, opt);
  const auto pred = f(x);
  for (size_t r = 0; r < 4; ++r) {
    double sum = attr.base_value;
    for (size_t j = 0; j < 8; ++j) sum += attr.values(r, j);
    EXPECT_NEAR(sum, pred[r], 1e-6);
  }
  EXPECT_EQ(kernel_shap(f, bg, x, opt).values.data(), attr.values.data());
}

TEST(KernelShap, PredictorFailureCarriesContext) {
  const PredictFn f = [](const Matrix&) -> std::vector<double> { throw std::runtime_error("boom"); };
  Rng rng(8);
  try {
    kernel_shap(f, random_matrix(2, 2, rng), random_matrix(1, 2, rng));
    FAIL() << "expected failure";
  } catch (const std::exception& e) {
    EXPECT_NE(std::string(e.what()).find("boom"), std::string::npos);
  }
}

// ---- importance ----

TEST(Importance, DriverFeaturesRankFirst) {
  const auto t = drop_incomplete_rows(synth_generate(default_oil_synth_spec(), 1500, 31));
  const auto x = t.to_matrix(t.input_indices());
  const auto y = t.column_values(t.target_index());
  GbdtParams p;
  p.n_rounds = 60;
  p.max_depth = 4;
  p.learning_rate = 0.1;
  const auto m = train_gbdt(x, y, p);
  std::vector<size_t> rows(100);
  std::iota(rows.begin(), rows.end(), size_t{0});
  const auto xs = x.select_rows(rows);
  const auto attr = tree_shap(m, xs, x);
  std::vector<std::string> names;
  for (size_t c : t.input_indices()) names.push_back(t.schema()[c].name);
  const auto s = summarize(attr, xs, names);
  std::set<std::string> top;
  for (size_t i = 0; i < 3; ++i) top.insert(s.ranked[i].feature);
  EXPECT_EQ(top, (std::set<std::string>{"reserves", "area", "thickness"}));
}

TEST(Importance, TiesBreakBySchemaOrder) {
  Attribution attr;
  attr.method = "test";
  attr.values = Matrix(2, 3, std::vector<double>{1, 1, 0, -1, -1, 0});
  const Matrix x(2, 3, std::vector<double>{0, 0, 0, 1, 1, 1});
  const auto s = summarize(attr, x, {"a", "b", "c"});
  EXPECT_EQ(s.ranked[0].feature, "a");
  EXPECT_EQ(s.ranked[1].feature, "b");
  EXPECT_EQ(s.ranked[0].rank, 1u);
}

TEST(Importance, LinearModelUsesCoefficients) {
  Rng rng(9);
  Matrix x(50, 2);
  std::vector<double> y(50);
  for (size_t i = 0; i < 50; ++i) {
    x(i, 0) = rng.normal();
    x(i, 1) = rng.normal();
    y[i] = 3 * x(i, 1) + 0.1 * rng.normal();
  }
  const std::vector<std::string> names{"a", "b"};
  const auto s = summarize(forward_stepwise(x, y, names, 0.05));
  EXPECT_EQ(s.ranked[0].feature, "b");
}

// ---- statistical tests ----

TEST(Welch, WorkedExample) {
  const std::vector<double> a{1, 2, 3, 4, 5}, b{3, 4, 5, 6, 7};
  const auto r = welch_t_test(a, b);
  EXPECT_NEAR(r.t, -2.0, 1e-12);
  EXPECT_NEAR(r.dof, 8.0, 1e-12);
  EXPECT_NEAR(r.p, oracle::t_two_sided_quadrature(-2.0, 8.0), 1e-6);
}

TEST(Welch, IdenticalSamples) {
  const std::vector<double> a{1, 4, 2, 8};
  const auto r = welch_t_test(a, a);
  EXPECT_EQ(r.t, 0.0);
  EXPECT_NEAR(r.p, 1.0, 1e-12);
}

TEST(Welch, SeparatedMeans) {
  const std::vector<double> a{0, 0, 0, 0}, b{1, 1.001, 0.999, 1.0005};
  EXPECT_LT(welch_t_test(a, b).p, 1e-4);
}

TEST(Welch, BothVariancesZeroIsDegenerate) {
  const std::vector<double> a{1, 1, 1}, b{2, 2};
  EXPECT_RF_ERROR(welch_t_test(a, b), kDegenerate);
}

TEST(Welch, UnequalVarianceDegreesOfFreedom) {
  Rng rng(10);
  std::vector<double> a(12), b(30);
  for (double& v : a) v = rng.normal();
  for (double& v : b) v = 3 * rng.normal();
  const auto r = welch_t_test(a, b);
  // Satterthwaite by hand.
  auto var = [](const std::vector<double>& v) {
    const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double s = 0;
    for (double x : v) s += (x - m) * (x - m);
    return s / static_cast<double>(v.size() - 1);
  };
  const double va = var(a) / 12, vb = var(b) / 30;
  EXPECT_NEAR(r.dof, (va + vb) * (va + vb) / (va * va / 11 + vb * vb / 29), 1e-9);
}

TEST(Ks, WorkedExamples) {
  const std::vector<double> a{1, 2, 3, 4}, b{1.5, 2.5, 3.5, 4.5};
  EXPECT_NEAR(ks_two_sample(a, b).statistic, 0.25, 1e-12);
  const auto same = ks_two_sample(a, a);
  EXPECT_EQ(same.statistic, 0.0);
  EXPECT_EQ(same.p, 1.0);
  const std::vector<double> lo{1, 2}, hi{5, 6, 7};
  EXPECT_EQ(ks_two_sample(lo, hi).statistic, 1.0);
  const std::vector<double> none;
  EXPECT_RF_ERROR(ks_two_sample(none, a), kArgument);
}

TEST(Ks, MatchesEcdfOracleOnRandomSamples) {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> a(5 + rng.index(30)), b(5 + rng.index(30));
    for (double& v : a) v = std::round(rng.normal() * 4) / 4;
    for (double& v : b) v = std::round(rng.normal() * 4) / 4 + 0.3;
    EXPECT_NEAR(ks_two_sample(a, b).statistic, oracle::ks_statistic_ecdf(a, b), 1e-12);
  }
}

TEST(Audit, SelfComparisonCompatible) {
  const auto t = synth_generate(default_oil_synth_spec(), 200, 12);
  const auto cols = audit_columns(t, t);
  const auto rep = audit(t, t, cols);
  EXPECT_EQ(rep.verdict, ShiftVerdict::kCompatible);
  for (const auto& c : rep.columns) EXPECT_EQ(c.ks->statistic, 0.0);
}

TEST(Audit, ResampleUsuallyCompatible) {
  const auto spec = default_oil_synth_spec();
  const auto t = synth_generate(spec, 2000, 13);
  Rng rng(14);
  int compatible = 0;
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<size_t> rows(300);
    for (auto& r : rows) r = rng.index(t.rows());
    const auto other = t.select_rows(rows);
    const auto rep = audit(t, other, audit_columns(t, other));
    if (rep.verdict == ShiftVerdict::kCompatible) ++compatible;
  }
  // Twelve columns at alpha 0.05 with two tests each: pass rate near a third.
  EXPECT_GE(compatible, 2);
}

TEST(Audit, ShiftedTargetIncompatible) {
  const auto t = drop_missing_target(synth_generate(default_oil_synth_spec(), 400, 15));
  DataTable moved = t;
  const size_t tc = t.target_index();
  const auto vals = t.column_values(tc);
  const double m = std::accumulate(vals.begin(), vals.end(), 0.0) / static_cast<double>(vals.size());
  double s2 = 0;
  for (double v : vals) s2 += (v - m) * (v - m);
  const double sd = std::sqrt(s2 / static_cast<double>(vals.size() - 1));
  for (size_t r = 0; r < t.rows(); ++r) moved.set_cell(r, tc, t.value(r, tc) + 3 * sd);
  const std::vector<std::string> cols{t.schema()[tc].name};
  const auto rep = audit(t, moved, cols);
  EXPECT_EQ(rep.verdict, ShiftVerdict::kIncompatible);
  EXPECT_LT(rep.columns[0].t_test->p, 1e-10);
  EXPECT_LT(rep.columns[0].ks->p, 1e-10);
}

}  // namespace
}  // namespace rfforge
