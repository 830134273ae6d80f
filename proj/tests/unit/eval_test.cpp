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

// Transform, metrics, tuning and learning curves.

#include <cmath>
#include <numeric>

#include "helpers.hpp"
#include "rf_forge/prep.hpp"
#include "rf_forge/rng.hpp"
#include "rf_forge/transform.hpp"
#include "rf_forge/tune_eval.hpp"

namespace rfforge {
namespace {

using testing::input;
using testing::make_table;
using testing::Row;
using testing::target;

DataTable one_column(std::initializer_list<double> xs, std::initializer_list<double> ys) {
  std::vector<Row> rows;
  auto y = ys.begin();
  for (double x : xs) rows.push_back({x, *y++});
  return make_table({input("x"), target()}, rows);
}

// ---- transform ----

TEST(Transform, MedianOfSymmetricColumnMapsToZeroThenHalf) {
  const auto t = one_column({1, 2, 3}, {0.1, 0.2, 0.3});
  const auto tf = FittedTransform::fit(t);
  EXPECT_NEAR(tf.gauss_stage(0, 2.0), 0.0, 1e-15);
  EXPECT_NEAR(tf.apply_value(0, 2.0), 0.5, 1e-15);
  EXPECT_EQ(tf.features()[0].rank_table, (std::vector<double>{1, 2, 3}));
}

TEST(Transform, FitColumnSpansUnitInterval) {
  const auto t = one_column({5, 1, 9, 3, 7}, {0.1, 0.5, 0.2, 0.3, 0.4});
  const auto out = FittedTransform::fit(t).apply(t);
  for (size_t c = 0; c < out.cols(); ++c) {
    const auto v = out.column_values(c);
    EXPECT_EQ(*std::min_element(v.begin(), v.end()), 0.0);
    EXPECT_EQ(*std::max_element(v.begin(), v.end()), 1.0);
  }
}

TEST(Transform, UnseenValuesClamp) {
  const auto tf = FittedTransform::fit(one_column({1, 2, 3}, {0.1, 0.2, 0.3}));
  EXPECT_EQ(tf.apply_value(0, -50.0), 0.0);
  EXPECT_EQ(tf.apply_value(0, 50.0), 1.0);
}

TEST(Transform, ConstantColumnIsDegenerate) {
  EXPECT_RF_ERROR(FittedTransform::fit(one_column({4, 4, 4}, {0.1, 0.2, 0.3})), kDegenerate);
}

TEST(Transform, InverseTraces) {
  const auto tf = FittedTransform::fit(one_column({1, 2, 3}, {0.1, 0.2, 0.3}));
  const std::vector<double> scaled{0.5, 0.0, 1.0};
  const auto native = tf.invert_target(scaled);
  EXPECT_NEAR(native[0], 0.2, 1e-12);
  EXPECT_NEAR(native[1], 0.1, 1e-12);
  EXPECT_NEAR(native[2], 0.3, 1e-12);
  const std::vector<double> bad{1.5};
  EXPECT_RF_ERROR(tf.invert_target(bad), kRange);
}

TEST(Transform, InverseRoundTripsTrainingTargets) {
  const auto t = drop_incomplete_rows(synth_generate(default_oil_synth_spec(), 300, 6));
  const auto tf = FittedTransform::fit(t);
  const auto scaled = tf.apply(t);
  const size_t tc = t.target_index();
  const auto back = tf.invert_target(scaled.column_values(tc));
  const auto orig = t.column_values(tc);
  for (size_t i = 0; i < orig.size(); ++i) EXPECT_NEAR(back[i], orig[i], 1e-9);
}

TEST(Transform, MinMaxOnlyIsAffine) {
  const auto t = one_column({0, 5, 10}, {0.1, 0.2, 0.3});
  const auto tf = FittedTransform::fit(t, 0.0, 1.0, TransformOrder::kMinMaxOnly);
  EXPECT_NEAR(tf.apply_value(0, 2.5), 0.25, 1e-15);
}

TEST(Transform, SchemaMismatchRejected) {
  const auto tf = FittedTransform::fit(one_column({1, 2, 3}, {0.1, 0.2, 0.3}));
  const auto other = make_table({input("y"), target()}, {{1.0, 0.1}});
  EXPECT_THROW(tf.apply(other), Error);
}

TEST(Transform, JsonRoundTripKeepsFingerprint) {
  const auto tf = FittedTransform::fit(one_column({1, 2, 3, 8}, {0.1, 0.2, 0.3, 0.9}));
  const auto back = FittedTransform::from_json(tf.to_json());
  EXPECT_EQ(back.fingerprint(), tf.fingerprint());
  EXPECT_EQ(back.apply_value(0, 2.5), tf.apply_value(0, 2.5));
}

// ---- metrics ----

TEST(Metrics, Rmse) {
  const std::vector<double> a{0, 0}, b{3, 4};
  EXPECT_NEAR(rmse(a, b), std::sqrt(12.5), 1e-12);
  EXPECT_EQ(rmse(b, b), 0.0);
  const std::vector<double> m{1, 2, 3}, shifted{1.7, 2.7, 3.7};
  EXPECT_NEAR(rmse(m, shifted), 0.7, 1e-12);
}

TEST(Metrics, PearsonR) {
  const std::vector<double> m{1, 2, 3}, e{1, 3, 2};
  EXPECT_NEAR(*pearson_r(m, e), 0.5, 1e-12);
  const std::vector<double> aff{3, 5, 7}, neg{-1, -2, -3}, flat{2, 2, 2};
  EXPECT_NEAR(*pearson_r(m, aff), 1.0, 1e-12);
  EXPECT_NEAR(*pearson_r(m, neg), -1.0, 1e-12);
  EXPECT_FALSE(pearson_r(m, flat).has_value());
}

TEST(Metrics, CoefficientOfDetermination) {
  const std::vector<double> m{0, 1}, e{1, 0};
  EXPECT_NEAR(cd(m, e), -3.0, 1e-12);
  EXPECT_EQ(cd(m, m), 1.0);
  const std::vector<double> x{1, 2, 6}, mean_pred{3, 3, 3}, flat{2, 2};
  EXPECT_EQ(cd(x, mean_pred), 0.0);
  EXPECT_THROW(cd(flat, flat), Error);
}

TEST(Metrics, EvaluateReportsUndefinedCd) {
  const std::vector<double> flat{2, 2}, e{1, 3};
  const auto rep = evaluate(flat, e, "test");
  EXPECT_FALSE(rep.cd.has_value());
  EXPECT_EQ(rep.n, 2u);
}

// ---- tuning ----

struct Problem {
  Matrix x;
  std::vector<double> y;
};

Problem smooth_problem(size_t n, uint64_t seed) {
  Rng rng(seed);
  Problem p{Matrix(n, 2), std::vector<double>(n)};
  for (size_t i = 0; i < n; ++i) {
    p.x(i, 0) = rng.uniform();
    p.x(i, 1) = rng.uniform();
    p.y[i] = 0.5 * std::sin(4 * p.x(i, 0)) + 0.3 * p.x(i, 1) + 0.02 * rng.normal();
  }
  return p;
}

FoldPlan folds_for(size_t n, size_t k) {
  std::vector<size_t> rows(n);
  std::iota(rows.begin(), rows.end(), size_t{0});
  return make_folds(rows, k, 4);
}

TEST(Grid, SingleCellChosen) {
  const auto p = smooth_problem(60, 1);
  ModelSpec spec;
  spec.gbdt.n_rounds = 10;
  GridSpec grid{{{"max_depth", {3}}}, {}};
  const auto res = grid_search_cv(spec, grid, folds_for(60, 3), p.x, p.y, {});
  ASSERT_EQ(res.cells.size(), 1u);
  EXPECT_EQ(res.chosen_spec.gbdt.max_depth, 3);
}

TEST(Grid, ZeroLearningRateLoses) {
  const auto p = smooth_problem(60, 2);
  ModelSpec spec;
  spec.gbdt.n_rounds = 20;
  GridSpec grid{{{"learning_rate", {0.0, 0.1}}}, {}};
  const auto res = grid_search_cv(spec, grid, folds_for(60, 3), p.x, p.y, {});
  EXPECT_EQ(res.chosen_spec.gbdt.learning_rate, 0.1);
}

TEST(Grid, ResultIndependentOfThreads) {
  const auto p = smooth_problem(80, 3);
  ModelSpec spec;
  spec.gbdt.n_rounds = 15;
  GridSpec grid{{{"max_depth", {2, 3}}, {"learning_rate", {0.1, 0.3}}}, {{"max_depth"}, {"learning_rate"}}};
  const auto a = grid_search_cv(spec, grid, folds_for(80, 4), p.x, p.y, {}, 1);
  const auto b = grid_search_cv(spec, grid, folds_for(80, 4), p.x, p.y, {}, 3);
  EXPECT_EQ(cv_to_csv(a), cv_to_csv(b));
}

TEST(Grid, StagedDepthNearExhaustiveOptimum) {
  // Staged search against the full cross product on the same folds.
  const auto t = drop_incomplete_rows(synth_generate(default_oil_synth_spec(), 900, 12));
  const auto tf = FittedTransform::fit(t);
  const auto s = tf.apply(t);
  const auto x = s.to_matrix(s.input_indices());
  const auto y = s.column_values(s.target_index());
  ModelSpec spec;
  spec.gbdt.n_rounds = 40;
  const std::vector<double> depths{2, 3, 4, 5, 6}, rates{0.1, 0.3};
  GridSpec staged{{{"max_depth", depths}, {"learning_rate", rates}}, {{"max_depth"}, {"learning_rate"}}};
  GridSpec full{{{"max_depth", depths}, {"learning_rate", rates}}, {}};
  const auto folds = folds_for(x.rows(), 3);
  const auto a = grid_search_cv(spec, staged, folds, x, y, {});
  const auto b = grid_search_cv(spec, full, folds, x, y, {});
  EXPECT_LE(std::abs(a.chosen_spec.gbdt.max_depth - b.chosen_spec.gbdt.max_depth), 1);
}

TEST(Grid, UnknownAxisRejected) {
  GridSpec grid{{{"no_such_param", {1}}}, {}};
  EXPECT_THROW(validate(grid, ModelFamily::kGbdt), Error);
}

TEST(Grid, AllCellsFailingIsTuningError) {
  const auto p = smooth_problem(30, 5);
  ModelSpec spec;
  spec.family = ModelFamily::kSvr;
  spec.svr.max_passes = 1;
  spec.svr.tol = 1e-14;
  spec.svr.epsilon = 0.0;
  GridSpec grid{{{"c", {1000}}}, {}};
  EXPECT_RF_ERROR(grid_search_cv(spec, grid, folds_for(30, 3), p.x, p.y, {}), kTuning);
}

// ---- learning curve ----

TEST(Curve, SizesFollowStride) {
  EXPECT_EQ(curve_sizes(60, 25), (std::vector<size_t>{1, 26, 51, 60}));
  EXPECT_EQ(curve_sizes(3, 1), (std::vector<size_t>{1, 2, 3}));
}

TEST(Curve, FinalPointMatchesDirectTraining) {
  const auto p = smooth_problem(40, 6);
  const auto q = smooth_problem(20, 7);
  ModelSpec spec;
  spec.gbdt.n_rounds = 10;
  const auto lc = learning_curve(spec, p.x, p.y, q.x, q.y, {}, 1);
  const auto m = train_model(spec, p.x, p.y, {});
  EXPECT_EQ(*lc.points.back().train_rmse, rmse(p.y, m.predict(p.x)));
}

TEST(Curve, MlrDegeneratePrefixesUndefined) {
  const auto p = smooth_problem(30, 8);
  ModelSpec spec;
  spec.family = ModelFamily::kMlr;
  spec.p_enter = 1.0;
  const std::vector<std::string> names{"a", "b"};
  const auto lc = learning_curve(spec, p.x, p.y, p.x, p.y, names, 1);
  EXPECT_FALSE(lc.points.front().train_rmse.has_value());
  EXPECT_TRUE(lc.points.back().train_rmse.has_value());
}

TEST(Curve, Deterministic) {
  const auto p = smooth_problem(50, 9);
  ModelSpec spec;
  spec.gbdt = oil_gbdt_params();
  spec.gbdt.n_rounds = 20;
  const auto a = learning_curve(spec, p.x, p.y, p.x, p.y, {}, 10, 1);
  const auto b = learning_curve(spec, p.x, p.y, p.x, p.y, {}, 10, 2);
  EXPECT_EQ(curve_to_csv(a), curve_to_csv(b));
}

TEST(Models, TrainedModelJsonRoundTrip) {
  const auto p = smooth_problem(30, 10);
  for (auto fam : {ModelFamily::kGbdt, ModelFamily::kSvr, ModelFamily::kMlr}) {
    ModelSpec spec;
    spec.family = fam;
    spec.gbdt.n_rounds = 5;
    spec.p_enter = 1.0;
    const std::vector<std::string> names{"a", "b"};
    const auto m = train_model(spec, p.x, p.y, names);
    EXPECT_EQ(TrainedModel::from_json(m.to_json()).predict(p.x), m.predict(p.x)) << to_string(fam);
    EXPECT_EQ(family_from_string(to_string(fam)), fam);
  }
}

}  // namespace
}  // namespace rfforge
