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

#include <algorithm>
#include <numeric>
#include <set>

#include "helpers.hpp"
#include "oracles.hpp"
#include "rf_forge/dataset.hpp"
#include "rf_forge/shift_audit.hpp"

namespace rfforge {
namespace {

using testing::input;
using testing::make_table;
using testing::target;

Schema small_schema() { return {input("porosity", 0.0, 1.0), input("area"), target("oil_rf")}; }

TEST(Csv, EmptyCellIsMissing) {
  const auto t = parse_csv("porosity,area,oil_rf\n0.1,2,0.3\n,3,0.4\n0.2,4,0.5\n", small_schema(), "f");
  ASSERT_EQ(t.rows(), 3u);
  EXPECT_FALSE(t.present(1, 0));
  EXPECT_EQ(t.missing_total(), 1u);
  EXPECT_EQ(t.provenance(0), "f");
}

TEST(Csv, MissingTargetColumnIsSchemaError) {
  EXPECT_RF_ERROR(parse_csv("porosity,area\n0.1,2\n", small_schema(), "f"), kSchema);
  try {
    parse_csv("porosity,area\n0.1,2\n", small_schema(), "f");
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("oil_rf"), std::string::npos);
  }
}

TEST(Csv, BadNumberCitesRowAndColumn) {
  try {
    parse_csv("porosity,area,oil_rf\n0.1,2,0.3\nabc,3,0.4\n", small_schema(), "f");
    FAIL() << "expected a parse error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kParse);
    const std::string msg = e.what();
    EXPECT_NE(msg.find("row 2"), std::string::npos) << msg;
    EXPECT_NE(msg.find("porosity"), std::string::npos) << msg;
  }
}

TEST(Csv, RoundTripIsExact) {
  const auto spec = default_oil_synth_spec();
  const auto t = synth_generate(spec, 40, 3);
  const auto back = parse_csv(to_csv(t), synth_schema(spec), "x");
  EXPECT_EQ(to_csv(back), to_csv(t));
}

TEST(Merge, SharedRowAppearsOnce) {
  const auto s = small_schema();
  const std::vector<DataTable> parts{make_table(s, {{0.1, 1.0, 0.2}, {0.3, 2.0, 0.4}}),
                                     make_table(s, {{0.1, 1.0, 0.2}, {0.5, 3.0, 0.6}})};
  EXPECT_EQ(merge_dedupe(parts).rows(), 3u);
}

TEST(Merge, DisjointSizesAdd) {
  const auto s = small_schema();
  std::vector<testing::Row> a, b;
  for (int i = 0; i < 4; ++i) a.push_back({0.1, static_cast<double>(i), 0.2});
  for (int i = 0; i < 6; ++i) b.push_back({0.2, static_cast<double>(i), 0.3});
  const std::vector<DataTable> parts{make_table(s, a), make_table(s, b)};
  EXPECT_EQ(merge_dedupe(parts).rows(), 10u);
}

TEST(Merge, DifferentMissingMaskKeepsBoth) {
  const auto s = small_schema();
  const std::vector<DataTable> parts{make_table(s, {{0.1, 1.0, 0.2}}), make_table(s, {{0.1, std::nullopt, 0.2}})};
  EXPECT_EQ(merge_dedupe(parts).rows(), 2u);
}

TEST(Merge, ProjectsToCommonColumns) {
  const std::vector<DataTable> parts{make_table(small_schema(), {{0.1, 1.0, 0.2}}),
                                     make_table({input("x"), target("oil_rf")}, {{3.0, 0.5}})};
  const auto m = merge_dedupe(parts);
  EXPECT_EQ(m.cols(), 1u);
  EXPECT_EQ(m.rows(), 2u);
}

TEST(Merge, SchemaMismatchIsMergeError) {
  const std::vector<DataTable> parts{make_table(small_schema(), {}),
                                     make_table({input("porosity", 0.0, 0.5), input("area"), target("oil_rf")}, {})};
  EXPECT_RF_ERROR(merge_dedupe(parts), kMerge);
}

TEST(Split, TenRowsNinetyPercent) {
  const auto s = split_train_test(10, 0.9, 7);
  EXPECT_EQ(s.train_rows.size(), 9u);
  EXPECT_EQ(s.test_rows.size(), 1u);
}

TEST(Split, Deterministic) {
  const auto a = split_train_test(50, 0.9, 7);
  const auto b = split_train_test(50, 0.9, 7);
  EXPECT_EQ(a.train_rows, b.train_rows);
  EXPECT_EQ(a.test_rows, b.test_rows);
}

TEST(Split, Partition) {
  const auto s = split_train_test(100, 0.9, 1);
  std::vector<size_t> all = s.train_rows;
  all.insert(all.end(), s.test_rows.begin(), s.test_rows.end());
  std::sort(all.begin(), all.end());
  std::vector<size_t> want(100);
  std::iota(want.begin(), want.end(), size_t{0});
  EXPECT_EQ(all, want);
}

TEST(Split, FractionOutsideUnitIntervalRejected) {
  EXPECT_RF_ERROR(split_train_test(10, 1.0, 1), kArgument);
  EXPECT_RF_ERROR(split_train_test(10, 0.0, 1), kArgument);
}

std::vector<size_t> fold_sizes(const FoldPlan& plan) {
  std::vector<size_t> sizes;
  for (size_t f = 0; f < plan.k; ++f) sizes.push_back(plan.rows_in(f).size());
  std::sort(sizes.begin(), sizes.end());
  return sizes;
}

TEST(Folds, OneRowPerFold) {
  std::vector<size_t> rows(10);
  std::iota(rows.begin(), rows.end(), size_t{0});
  EXPECT_EQ(fold_sizes(make_folds(rows, 10, 3)), std::vector<size_t>(10, 1));
}

TEST(Folds, ElevenRowsTenFolds) {
  std::vector<size_t> rows(11);
  std::iota(rows.begin(), rows.end(), size_t{0});
  auto want = std::vector<size_t>(9, 1);
  want.push_back(2);
  EXPECT_EQ(fold_sizes(make_folds(rows, 10, 3)), want);
}

TEST(Folds, TableFourTrainSize) {
  std::vector<size_t> rows(1502);
  std::iota(rows.begin(), rows.end(), size_t{0});
  EXPECT_EQ(fold_sizes(make_folds(rows, 3, 11)), (std::vector<size_t>{500, 501, 501}));
}

TEST(Folds, TooManyFoldsRejected) {
  std::vector<size_t> rows(4);
  std::iota(rows.begin(), rows.end(), size_t{0});
  EXPECT_RF_ERROR(make_folds(rows, 5, 1), kArgument);
}

TEST(Folds, InsideAndOutsidePartitionRows) {
  std::vector<size_t> rows(23);
  std::iota(rows.begin(), rows.end(), size_t{100});
  const auto plan = make_folds(rows, 4, 2);
  for (size_t f = 0; f < 4; ++f) EXPECT_EQ(plan.rows_in(f).size() + plan.rows_outside(f).size(), 23u);
}

TEST(Synth, EmptyRequest) { EXPECT_EQ(synth_generate(default_oil_synth_spec(), 0, 1).rows(), 0u); }

TEST(Synth, DeterministicPerSeed) {
  const auto spec = default_oil_synth_spec();
  EXPECT_TRUE(synth_generate(spec, 200, 9) == synth_generate(spec, 200, 9));
  EXPECT_FALSE(synth_generate(spec, 200, 9) == synth_generate(spec, 200, 10));
}

TEST(Synth, ZeroShiftMatchesReference) {
  const auto spec = default_oil_synth_spec();
  const std::vector<std::string> cols{"porosity"};
  EXPECT_EQ(to_csv(synth_generate(with_shift(spec, cols, 0.0, spec.label), 100, 4)),
            to_csv(synth_generate(spec, 100, 4)));
}

TEST(Synth, ShiftedPorosityIsDetected) {
  const auto spec = default_oil_synth_spec();
  const std::vector<std::string> cols{"porosity"};
  const auto ref = synth_generate(spec, 400, 1);
  const auto moved = synth_generate(with_shift(spec, cols, 3.0, "moved"), 400, 2);
  const size_t c = ref.column_index("porosity");
  const auto a = ref.present_values(c), b = moved.present_values(c);
  EXPECT_GT(oracle::ks_statistic_ecdf(a, b), 0.5);
  EXPECT_LT(ks_two_sample(a, b).p, 0.05);
}

TEST(Synth, ValuesRespectSchemaBounds) {
  const auto spec = default_oil_synth_spec();
  const auto t = synth_generate(spec, 500, 5);
  for (size_t c = 0; c < t.cols(); ++c) {
    const auto& f = t.schema()[c];
    for (double v : t.present_values(c)) {
      if (f.lower_bound) EXPECT_GE(v, *f.lower_bound) << f.name;
      if (f.upper_bound) EXPECT_LE(v, *f.upper_bound) << f.name;
    }
  }
}

TEST(Synth, SpecJsonRoundTrip) {
  const auto spec = default_oil_synth_spec();
  const auto back = synth_spec_from_json(synth_spec_to_json(spec));
  EXPECT_EQ(to_csv(synth_generate(back, 50, 8)), to_csv(synth_generate(spec, 50, 8)));
}

TEST(Schema, JsonRoundTrip) {
  const auto s = oil_schema();
  EXPECT_EQ(schema_from_json(schema_to_json(s)), s);
  EXPECT_EQ(schema_from_json(schema_to_json(gas_schema())), gas_schema());
}

TEST(Schema, DuplicateNamesRejected) {
  EXPECT_RF_ERROR(validate_schema({input("a"), input("a"), target()}), kSchema);
}

TEST(Table, ProjectReordersColumns) {
  const auto t = make_table(small_schema(), {{0.1, 2.0, 0.3}});
  const std::vector<std::string> names{"oil_rf", "porosity"};
  const auto p = t.project(names);
  ASSERT_EQ(p.cols(), 2u);
  EXPECT_EQ(p.value(0, 0), 0.3);
  EXPECT_EQ(p.value(0, 1), 0.1);
}

TEST(Table, MatrixNeedsCompleteCells) {
  const auto t = make_table(small_schema(), {{std::nullopt, 2.0, 0.3}});
  const std::vector<size_t> cols{0, 1};
  EXPECT_THROW(t.to_matrix(cols), Error);
}

}  // namespace
}  // namespace rfforge
