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

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>

#include "helpers.hpp"
#include "rf_forge/pipeline.hpp"

namespace rfforge {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

const fs::path kFixture = fs::path(RF_FORGE_SOURCE_DIR) / "data" / "fixture";

json minimal() {
  return {{"schema", "schema.json"},
          {"databases", {{"db_a", "db_a.csv"}, {"db_c", "db_c.csv"}}},
          {"train_test", {"db_a"}}};
}

bool mentions(const std::vector<std::string>& errors, const std::string& needle) {
  for (const auto& e : errors)
    if (e.find(needle) != std::string::npos) return true;
  return false;
}

TEST(Config, MinimalDocumentTakesDefaults) {
  const auto r = validate_config_json(minimal(), kFixture);
  ASSERT_TRUE(r.errors.empty()) << r.errors.front();
  const auto& c = *r.config;
  EXPECT_EQ(c.models.size(), 3u);
  EXPECT_EQ(c.split_fraction, kDefaultTrainFraction);
  EXPECT_FALSE(c.folds.has_value());
  EXPECT_EQ(c.curve_stride, 25u);
}

TEST(Config, MissingSchemaIsSingleError) {
  auto doc = minimal();
  doc.erase("schema");
  const auto r = validate_config_json(doc, kFixture);
  EXPECT_FALSE(r.config.has_value());
  ASSERT_EQ(r.errors.size(), 1u);
  EXPECT_NE(r.errors[0].find("schema"), std::string::npos);
}

TEST(Config, AllProblemsReportedTogether) {
  auto doc = minimal();
  doc["folds"] = 1;
  doc["split_fraction"] = 1.5;
  doc["bogus"] = true;
  const auto r = validate_config_json(doc, kFixture);
  EXPECT_FALSE(r.config.has_value());
  EXPECT_GE(r.errors.size(), 3u);
  EXPECT_TRUE(mentions(r.errors, "folds"));
  EXPECT_TRUE(mentions(r.errors, "split_fraction"));
  EXPECT_TRUE(mentions(r.errors, "bogus"));
}

TEST(Config, IndependentOverlapRejected) {
  auto doc = minimal();
  doc["independent"] = {"db_a"};
  EXPECT_TRUE(mentions(validate_config_json(doc, kFixture).errors, "both"));
  doc = minimal();
  doc["databases"]["db_copy"] = "db_a.csv";
  doc["independent"] = {"db_copy"};
  EXPECT_TRUE(mentions(validate_config_json(doc, kFixture).errors, "same file"));
}

TEST(Config, UnknownDatabaseAndMissingFile) {
  auto doc = minimal();
  doc["train_test"] = {"nope"};
  doc["databases"]["ghost"] = "no_such.csv";
  const auto r = validate_config_json(doc, kFixture);
  EXPECT_TRUE(mentions(r.errors, "nope"));
  EXPECT_TRUE(mentions(r.errors, "no_such.csv"));
}

TEST(Stages, NamesRoundTrip) {
  for (Stage s : all_stages()) EXPECT_EQ(stage_from_string(to_string(s)), s);
  EXPECT_THROW(stage_from_string("polish"), Error);
}

class TempDir : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("rf_forge_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  fs::path dir_;
};

using Scatter = TempDir;

TEST_F(Scatter, EmptyInputWritesHeaderOnly) {
  const std::vector<double> none;
  emit_scatter(none, none, dir_ / "s.csv");
  EXPECT_EQ(read_text_file(dir_ / "s.csv"), "measured,estimated\n");
  const auto meta = json::parse(read_text_file(dir_ / "s.csv.meta.json"));
  EXPECT_EQ(meta["n"], 0);
  EXPECT_FALSE(meta.contains("range"));
}

TEST_F(Scatter, PerfectPredictionsLieOnLine) {
  const std::vector<double> y{0.1, 0.4, 0.25};
  emit_scatter(y, y, dir_ / "s.csv");
  const auto meta = json::parse(read_text_file(dir_ / "s.csv.meta.json"));
  EXPECT_EQ(meta["points_on_line"], 3);
  EXPECT_EQ(meta["reference_line"]["slope"], 1.0);
  EXPECT_EQ(meta["reference_line"]["intercept"], 0.0);
}

TEST_F(Scatter, LengthMismatchIsShapeError) {
  const std::vector<double> a{1, 2}, b{1};
  EXPECT_RF_ERROR(emit_scatter(a, b, dir_ / "s.csv"), kShape);
}

using Pipeline = TempDir;

TEST_F(Pipeline, SmallRunWritesManifest) {
  auto doc = minimal();
  doc["independent"] = {"db_c"};
  doc["models"] = {"mlr"};
  doc["folds"] = 2;
  doc["curve"] = {{"stride", 500}, {"models", json::array()}};
  doc["explain"] = {{"samples", 3}, {"background", 3}};
  doc["output"] = dir_.string();
  const auto r = validate_config_json(doc, kFixture);
  ASSERT_TRUE(r.errors.empty()) << r.errors.front();
  const auto m = run_pipeline(*r.config);
  EXPECT_EQ(m.status, "complete");
  EXPECT_EQ(m.stages.size(), all_stages().size());
  for (const auto& a : m.artifacts()) EXPECT_TRUE(fs::exists(m.root / a)) << a;
  const auto back = RunManifest::from_json(json::parse(read_text_file(m.root / "manifest.json")));
  EXPECT_EQ(back.config_hash, m.config_hash);
  EXPECT_EQ(back.evaluations, m.evaluations);
}

TEST(Threads, FlagWins) {
  EXPECT_EQ(resolve_threads(3), 3u);
  EXPECT_GE(resolve_threads(std::nullopt), 1u);
}

// ---- CLI ----

int run_cli(const std::string& args) {
  const std::string cmd = std::string("\"") + RF_FORGE_CLI_PATH + "\" " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

TEST(Cli, ValidateFixtureConfig) {
  EXPECT_EQ(run_cli("validate --config \"" + (kFixture / "run.json").string() + "\""), 0);
}

TEST(Cli, ValidateMissingFileIsConfigError) { EXPECT_EQ(run_cli("validate --config /no/such/file.json"), 2); }

TEST(Cli, UnknownResumeStageIsConfigError) {
  EXPECT_EQ(run_cli("run --config \"" + (kFixture / "run.json").string() + "\" --resume polish"), 2);
}

TEST(Cli, NoSubcommandIsConfigError) { EXPECT_EQ(run_cli(""), 2); }

TEST_F(TempDir, CliSynthWritesCsv) {
  const fs::path out = dir_ / "s.csv";
  ASSERT_EQ(run_cli("synth --rows 25 --seed 4 --out \"" + out.string() + "\" --schema-out \"" +
                    (dir_ / "schema.json").string() + "\""),
            0);
  const auto t = parse_csv(read_text_file(out), schema_from_json(json::parse(read_text_file(dir_ / "schema.json"))), "s");
  EXPECT_EQ(t.rows(), 25u);
}

}  // namespace
}  // namespace rfforge
