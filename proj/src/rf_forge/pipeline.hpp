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

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "rf_forge/dataset.hpp"
#include "rf_forge/prep.hpp"
#include "rf_forge/transform.hpp"
#include "rf_forge/tune_eval.hpp"

namespace rfforge {

inline constexpr const char* kVersion = "0.1.0";

struct DatabaseRef {
  std::string name;
  std::filesystem::path path;
};

struct FamilyConfig {
  ModelSpec spec;
  std::optional<GridSpec> grid;  // absent: train with spec as given
};

// Declarative description of one run. Relative paths in the document resolve
// against the directory holding it.
struct RunConfig {
  std::filesystem::path schema_path;
  std::vector<DatabaseRef> databases;
  std::vector<std::string> train_test;   // merged, then split
  std::vector<std::string> independent;  // merged, held out entirely
  std::vector<ModelFamily> models;
  std::map<ModelFamily, FamilyConfig> families;
  double split_fraction = kDefaultTrainFraction;
  uint64_t seed = 0;
  std::optional<size_t> folds;  // absent: 10, or 3 below 2000 training rows
  size_t curve_stride = 25;
  std::vector<ModelFamily> curve_models;
  CapPolicy capping;
  double sparse_threshold = kDefaultSparseThreshold;
  ImputePlan impute;
  double screen_threshold = 0.9;
  std::vector<ModelFamily> screen_apply;  // families that drop screened columns
  TransformOrder transform_order = TransformOrder::kGaussThenMinMax;
  double range_min = 0.0;
  double range_max = 1.0;
  size_t explain_samples = 20;
  size_t explain_background = 20;
  size_t n_coalitions = 2048;
  double alpha = 0.05;
  std::filesystem::path output_dir;
  nlohmann::json document;  // as parsed, for hashing
};

struct ConfigResult {
  std::optional<RunConfig> config;
  std::vector<std::string> errors;  // every violation found
};

ConfigResult validate_config(const std::filesystem::path& path);
ConfigResult validate_config_json(const nlohmann::json& doc, const std::filesystem::path& base_dir);

enum class Stage {
  kIngest,
  kClean,
  kSplit,
  kImpute,
  kScreen,
  kTransform,
  kTune,
  kTrain,
  kEval,
  kCurve,
  kExplain,
  kAudit,
};

const char* to_string(Stage stage);
Stage stage_from_string(const std::string& name);
const std::vector<Stage>& all_stages();

struct RunOptions {
  Stage from = Stage::kIngest;
  Stage to = Stage::kAudit;
  std::optional<uint64_t> seed;
  std::optional<std::filesystem::path> output_dir;
  unsigned threads = 1;
};

struct StageRecord {
  std::string name;
  double seconds = 0.0;
  std::vector<std::string> artifacts;  // relative to the run directory
};

struct RunManifest {
  std::string config_hash;
  uint64_t seed = 0;
  std::string version = kVersion;
  std::filesystem::path root;
  std::vector<StageRecord> stages;
  nlohmann::json fingerprints = nlohmann::json::object();
  nlohmann::json evaluations = nlohmann::json::array();  // one report per model and split
  std::string status = "complete";
  std::string failed_stage;
  std::string error;

  std::vector<std::string> artifacts() const;
  nlohmann::json to_json() const;
  static RunManifest from_json(const nlohmann::json& doc);
};

// Runs stages [from, to]. Stages before `from` are reloaded from the run
// directory. A failing stage writes a partial manifest and rethrows with the
// stage name prefixed.
RunManifest run_pipeline(const RunConfig& config, const RunOptions& options = {});

// Two-column measured/estimated CSV plus a sidecar <path>.meta.json holding the
// 1:1 reference line and the data range.
void emit_scatter(std::span<const double> measured, std::span<const double> estimated,
                  const std::filesystem::path& path);

// --threads value, else RF_FORGE_THREADS, else the hardware concurrency.
unsigned resolve_threads(std::optional<int> flag);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string fnv1a_hex(const std::string& text);

}  // namespace rfforge
