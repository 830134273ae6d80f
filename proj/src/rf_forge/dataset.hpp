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
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "rf_forge/matrix.hpp"

namespace rfforge {

enum class Role { kInput, kTarget, kExcluded };

const char* to_string(Role role);
Role role_from_string(std::string_view text);

struct FeatureSchema {
  std::string name;
  std::string unit;
  Role role = Role::kInput;
  std::optional<double> lower_bound;
  std::optional<double> upper_bound;

  bool operator==(const FeatureSchema&) const = default;
};

using Schema = std::vector<FeatureSchema>;

// Throws kSchema unless names are unique, bounds are ordered and exactly one
// entry is the target.
void validate_schema(const Schema& schema);

nlohmann::json schema_to_json(const Schema& schema);
Schema schema_from_json(const nlohmann::json& doc);
Schema load_schema(const std::filesystem::path& path);
void save_schema(const Schema& schema, const std::filesystem::path& path);

// Canonical reservoir schemas with the physical bounds of the published
// feature table.
Schema oil_schema();
Schema gas_schema();

// Column-major table with a per-cell presence mask. Missing cells are never
// encoded as sentinel numbers; their value slot holds NaN and must not be read.
class DataTable {
 public:
  DataTable() = default;
  explicit DataTable(Schema schema);

  const Schema& schema() const { return schema_; }
  size_t rows() const { return provenance_.size(); }
  size_t cols() const { return schema_.size(); }

  bool present(size_t row, size_t col) const { return present_[col][row] != 0; }
  double value(size_t row, size_t col) const { return values_[col][row]; }
  std::optional<double> cell(size_t row, size_t col) const {
    if (!present(row, col)) return std::nullopt;
    return values_[col][row];
  }
  const std::string& provenance(size_t row) const { return provenance_[row]; }

  std::optional<size_t> find_column(std::string_view name) const;
  size_t column_index(std::string_view name) const;
  size_t target_index() const;
  std::vector<size_t> input_indices() const;
  std::vector<std::string> names() const;

  size_t missing_in_column(size_t col) const;
  size_t missing_in_row(size_t row, std::span<const size_t> cols) const;
  size_t missing_total() const;

  // Present values of one column, in row order.
  std::vector<double> present_values(size_t col) const;

  void append_row(std::span<const std::optional<double>> cells, std::string provenance);
  void set_cell(size_t row, size_t col, double value);

  DataTable select_rows(std::span<const size_t> rows) const;
  // Projects onto the named columns, in the given order.
  DataTable project(std::span<const std::string> names) const;

  // Dense matrix of the given columns; every selected cell must be present.
  Matrix to_matrix(std::span<const size_t> cols) const;
  std::vector<double> column_values(size_t col) const;

  bool operator==(const DataTable&) const;

 private:
  Schema schema_;
  std::vector<std::vector<double>> values_;
  std::vector<std::vector<uint8_t>> present_;
  std::vector<std::string> provenance_;
};

// CSV conventions: UTF-8, header row, empty cell = missing, '.' decimal point.
// An optional "source" column not named in the schema carries provenance.
DataTable load_csv(const std::filesystem::path& path, const Schema& schema);
DataTable parse_csv(std::string_view text, const Schema& schema,
                    std::string_view default_provenance);
void save_csv(const DataTable& table, const std::filesystem::path& path);
std::string to_csv(const DataTable& table);

// Concatenates tables projected to their common columns and collapses rows
// whose presence masks and present values are bit-identical. The first
// occurrence wins.
DataTable merge_dedupe(std::span<const DataTable> tables);

struct SplitIndex {
  std::vector<size_t> train_rows;  // in shuffled order
  std::vector<size_t> test_rows;
  uint64_t seed = 0;
};

constexpr double kDefaultTrainFraction = 0.90;

// Seeded shuffle then prefix cut, so fractions nest for a fixed seed.
SplitIndex split_train_test(size_t row_count, double fraction, uint64_t seed);
SplitIndex split_train_test(const DataTable& table, double fraction, uint64_t seed);

struct FoldPlan {
  size_t k = 0;
  std::vector<size_t> rows;  // train rows
  std::vector<size_t> fold;  // fold id per entry of rows

  std::vector<size_t> rows_in(size_t f) const;
  std::vector<size_t> rows_outside(size_t f) const;
  std::vector<size_t> fold_sizes() const;
};

FoldPlan make_folds(const SplitIndex& split, size_t k, uint64_t seed);
FoldPlan make_folds(std::span<const size_t> rows, size_t k, uint64_t seed);

// ---- synthetic database generator ------------------------------------------

enum class Distribution { kNormal, kLogNormal, kUniform };

struct FeatureGenerator {
  FeatureSchema schema;
  Distribution distribution = Distribution::kNormal;
  // normal: mean, sd; lognormal: mu, sigma of log; uniform: low, high.
  double p1 = 0.0;
  double p2 = 1.0;
  double missing_rate = 0.0;
  std::optional<int> decimals;
  // Shift knob: location moved by `shift` reference standard deviations (log
  // space for lognormal) and spread multiplied by `scale`.
  double shift = 0.0;
  double scale = 1.0;
};

enum class TermKind { kLinear, kTanh, kSquare };

struct TargetTerm {
  std::string feature;
  double weight = 0.0;
  TermKind kind = TermKind::kLinear;
};

struct SynthSpec {
  std::string label = "synthetic";
  std::vector<FeatureGenerator> features;
  FeatureSchema target;
  double intercept = 0.5;
  double noise_sd = 0.05;
  std::vector<TargetTerm> terms;
  std::optional<int> target_decimals;
  double target_missing_rate = 0.0;
};

nlohmann::json synth_spec_to_json(const SynthSpec& spec);
SynthSpec synth_spec_from_json(const nlohmann::json& doc);
SynthSpec load_synth_spec(const std::filesystem::path& path);

// Built-in oil-reservoir generator whose target is driven mostly by reserves,
// area and thickness.
SynthSpec default_oil_synth_spec();

// Applies a shift of `sds` reference standard deviations to each named feature.
SynthSpec with_shift(SynthSpec spec, std::span<const std::string> features, double sds,
                     std::string label);

Schema synth_schema(const SynthSpec& spec);

// Target = clip(intercept + sum(weight * term(z)) + noise, bounds) where z is a
// feature standardized by its unshifted reference moments.
DataTable synth_generate(const SynthSpec& spec, size_t n, uint64_t seed);

}  // namespace rfforge
