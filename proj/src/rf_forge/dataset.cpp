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

#include "rf_forge/dataset.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <unordered_set>

#include "rf_forge/rng.hpp"
#include "rf_forge/stats.hpp"

namespace rfforge {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> fields;
  std::string current;
  bool quoted = false;
  for (size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          current.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        current.push_back(ch);
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      fields.push_back(std::move(current));
      current.clear();
    } else {
      current.push_back(ch);
    }
  }
  fields.push_back(std::move(current));
  return fields;
}

std::string quote_csv(const std::string& field) {
  if (field.find_first_of(",\"\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char ch : field) {
    if (ch == '"') out.push_back('"');
    out.push_back(ch);
  }
  out.push_back('"');
  return out;
}

std::optional<double> optional_number(const nlohmann::json& doc, const char* key) {
  if (!doc.contains(key) || doc.at(key).is_null()) return std::nullopt;
  return doc.at(key).get<double>();
}

}  // namespace

const char* to_string(Role role) {
  switch (role) {
    case Role::kInput: return "input";
    case Role::kTarget: return "target";
    case Role::kExcluded: return "excluded";
  }
  return "input";
}

Role role_from_string(std::string_view text) {
  if (text == "input") return Role::kInput;
  if (text == "target") return Role::kTarget;
  if (text == "excluded") return Role::kExcluded;
  fail(ErrorKind::kSchema, "unknown feature role \"" + std::string(text) + "\"");
}

void validate_schema(const Schema& schema) {
  std::set<std::string> seen;
  size_t targets = 0;
  for (const auto& f : schema) {
    require(!f.name.empty(), ErrorKind::kSchema, "feature with empty name");
    require(seen.insert(f.name).second, ErrorKind::kSchema,
            "duplicate feature name \"" + f.name + "\"");
    if (f.lower_bound && f.upper_bound)
      require(*f.lower_bound <= *f.upper_bound, ErrorKind::kSchema,
              "feature \"" + f.name + "\" has lower_bound > upper_bound");
    if (f.role == Role::kTarget) ++targets;
  }
  require(targets == 1, ErrorKind::kSchema,
          "schema must have exactly one target, found " + std::to_string(targets));
}

nlohmann::json schema_to_json(const Schema& schema) {
  nlohmann::json features = nlohmann::json::array();
  for (const auto& f : schema) {
    nlohmann::json entry = {{"name", f.name}, {"unit", f.unit}, {"role", to_string(f.role)}};
    entry["lower_bound"] = f.lower_bound ? nlohmann::json(*f.lower_bound) : nlohmann::json();
    entry["upper_bound"] = f.upper_bound ? nlohmann::json(*f.upper_bound) : nlohmann::json();
    features.push_back(std::move(entry));
  }
  return {{"format", "rf_forge.schema"}, {"version", 1}, {"features", features}};
}

Schema schema_from_json(const nlohmann::json& doc) {
  Schema schema;
  try {
    const auto& features = doc.is_array() ? doc : doc.at("features");
    for (const auto& entry : features) {
      FeatureSchema f;
      f.name = entry.at("name").get<std::string>();
      f.unit = entry.value("unit", "");
      f.role = role_from_string(entry.value("role", "input"));
      f.lower_bound = optional_number(entry, "lower_bound");
      f.upper_bound = optional_number(entry, "upper_bound");
      schema.push_back(std::move(f));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kSchema, std::string("malformed schema document: ") + e.what());
  }
  validate_schema(schema);
  return schema;
}

Schema load_schema(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), ErrorKind::kIo, "cannot open schema file " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kSchema, "cannot parse schema " + path.string() + ": " + e.what());
  }
  return schema_from_json(doc);
}

void save_schema(const Schema& schema, const std::filesystem::path& path) {
  std::ofstream out(path);
  require(out.good(), ErrorKind::kIo, "cannot write " + path.string());
  out << schema_to_json(schema).dump(2) << '\n';
}

Schema oil_schema() {
  return {
      {"api_gravity", "degAPI", Role::kInput, std::nullopt, std::nullopt},
      {"bo", "RB/STB", Role::kInput, 1.0, 3.0},
      {"gor", "MSCF/RB", Role::kInput, 0.0, 60.0},
      {"sw", "fraction", Role::kInput, 0.0, 1.0},
      {"temperature", "degF", Role::kInput, std::nullopt, std::nullopt},
      {"pressure", "psi", Role::kInput, std::nullopt, std::nullopt},
      {"thickness", "ft", Role::kInput, std::nullopt, std::nullopt},
      {"reserves", "STB", Role::kInput, 0.0, 5e11},
      {"permeability", "mD", Role::kInput, std::nullopt, std::nullopt},
      {"porosity", "ft3/ft3", Role::kInput, 0.0, 1.0},
      {"area", "acre", Role::kInput, std::nullopt, std::nullopt},
      {"oil_rf", "fraction", Role::kTarget, 0.0, 1.0},
  };
}

Schema gas_schema() {
  return {
      {"gor", "MSCF/RB", Role::kInput, 0.0, 1e9},
      {"sw", "fraction", Role::kInput, 0.0, 1.0},
      {"temperature", "degF", Role::kInput, std::nullopt, std::nullopt},
      {"pressure", "psi", Role::kInput, std::nullopt, std::nullopt},
      {"thickness", "ft", Role::kInput, std::nullopt, std::nullopt},
      {"reserves", "MMSCF", Role::kInput, 0.0, 4e8},
      {"permeability", "mD", Role::kInput, std::nullopt, std::nullopt},
      {"porosity", "ft3/ft3", Role::kInput, 0.0, 1.0},
      {"area", "acre", Role::kInput, std::nullopt, std::nullopt},
      {"gas_rf", "fraction", Role::kTarget, 0.0, 1.0},
  };
}

// ---- DataTable --------------------------------------------------------------

DataTable::DataTable(Schema schema)
    : schema_(std::move(schema)), values_(schema_.size()), present_(schema_.size()) {
  validate_schema(schema_);
}

std::optional<size_t> DataTable::find_column(std::string_view name) const {
  for (size_t i = 0; i < schema_.size(); ++i)
    if (schema_[i].name == name) return i;
  return std::nullopt;
}

size_t DataTable::column_index(std::string_view name) const {
  auto idx = find_column(name);
  require(idx.has_value(), ErrorKind::kSchema, "no column named \"" + std::string(name) + "\"");
  return *idx;
}

size_t DataTable::target_index() const {
  for (size_t i = 0; i < schema_.size(); ++i)
    if (schema_[i].role == Role::kTarget) return i;
  fail(ErrorKind::kSchema, "table has no target column");
}

std::vector<size_t> DataTable::input_indices() const {
  std::vector<size_t> out;
  for (size_t i = 0; i < schema_.size(); ++i)
    if (schema_[i].role == Role::kInput) out.push_back(i);
  return out;
}

std::vector<std::string> DataTable::names() const {
  std::vector<std::string> out;
  for (const auto& f : schema_) out.push_back(f.name);
  return out;
}

size_t DataTable::missing_in_column(size_t col) const {
  return static_cast<size_t>(std::count(present_[col].begin(), present_[col].end(), 0));
}

size_t DataTable::missing_in_row(size_t row, std::span<const size_t> cols) const {
  size_t missing = 0;
  for (size_t c : cols) missing += present_[c][row] ? 0 : 1;
  return missing;
}

size_t DataTable::missing_total() const {
  size_t total = 0;
  for (size_t c = 0; c < cols(); ++c) total += missing_in_column(c);
  return total;
}

std::vector<double> DataTable::present_values(size_t col) const {
  std::vector<double> out;
  out.reserve(rows());
  for (size_t r = 0; r < rows(); ++r)
    if (present_[col][r]) out.push_back(values_[col][r]);
  return out;
}

void DataTable::append_row(std::span<const std::optional<double>> cells, std::string provenance) {
  require(cells.size() == schema_.size(), ErrorKind::kShape,
          "row has " + std::to_string(cells.size()) + " cells, schema has " +
              std::to_string(schema_.size()));
  for (size_t c = 0; c < cells.size(); ++c) {
    values_[c].push_back(cells[c] ? *cells[c] : kNaN);
    present_[c].push_back(cells[c] ? 1 : 0);
  }
  provenance_.push_back(std::move(provenance));
}

void DataTable::set_cell(size_t row, size_t col, double value) {
  values_[col][row] = value;
  present_[col][row] = 1;
}

DataTable DataTable::select_rows(std::span<const size_t> rows) const {
  DataTable out(schema_);
  for (size_t c = 0; c < cols(); ++c) {
    out.values_[c].reserve(rows.size());
    out.present_[c].reserve(rows.size());
    for (size_t r : rows) {
      out.values_[c].push_back(values_[c][r]);
      out.present_[c].push_back(present_[c][r]);
    }
  }
  out.provenance_.reserve(rows.size());
  for (size_t r : rows) out.provenance_.push_back(provenance_[r]);
  return out;
}

DataTable DataTable::project(std::span<const std::string> names) const {
  Schema schema;
  std::vector<size_t> idx;
  for (const auto& name : names) {
    idx.push_back(column_index(name));
    schema.push_back(schema_[idx.back()]);
  }
  DataTable out(std::move(schema));
  for (size_t j = 0; j < idx.size(); ++j) {
    out.values_[j] = values_[idx[j]];
    out.present_[j] = present_[idx[j]];
  }
  out.provenance_ = provenance_;
  return out;
}

Matrix DataTable::to_matrix(std::span<const size_t> cols) const {
  Matrix m(rows(), cols.size());
  for (size_t j = 0; j < cols.size(); ++j) {
    const size_t c = cols[j];
    for (size_t r = 0; r < rows(); ++r) {
      require(present_[c][r] != 0, ErrorKind::kData,
              "missing value in column \"" + schema_[c].name + "\" at row " +
                  std::to_string(r + 1));
      m(r, j) = values_[c][r];
    }
  }
  return m;
}

std::vector<double> DataTable::column_values(size_t col) const {
  for (size_t r = 0; r < rows(); ++r)
    require(present_[col][r] != 0, ErrorKind::kData,
            "missing value in column \"" + schema_[col].name + "\" at row " +
                std::to_string(r + 1));
  return values_[col];
}

bool DataTable::operator==(const DataTable& other) const {
  if (schema_ != other.schema_ || provenance_ != other.provenance_) return false;
  for (size_t c = 0; c < cols(); ++c) {
    if (present_[c] != other.present_[c]) return false;
    for (size_t r = 0; r < rows(); ++r)
      if (present_[c][r] &&
          std::bit_cast<uint64_t>(values_[c][r]) != std::bit_cast<uint64_t>(other.values_[c][r]))
        return false;
  }
  return true;
}

// ---- CSV --------------------------------------------------------------------

DataTable parse_csv(std::string_view text, const Schema& schema,
                    std::string_view default_provenance) {
  validate_schema(schema);
  std::vector<std::string_view> lines;
  size_t start = 0;
  while (start <= text.size()) {
    size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    start = end + 1;
  }
  while (!lines.empty() && trim(lines.back()).empty()) lines.pop_back();
  require(!lines.empty(), ErrorKind::kSchema, "CSV has no header row");

  std::string_view header_line = lines[0];
  if (header_line.substr(0, 3) == "\xEF\xBB\xBF") header_line.remove_prefix(3);
  auto header = split_csv_line(header_line);
  for (auto& h : header) h = std::string(trim(h));

  std::vector<std::optional<size_t>> column_of(schema.size());
  for (size_t s = 0; s < schema.size(); ++s) {
    for (size_t h = 0; h < header.size(); ++h)
      if (header[h] == schema[s].name) column_of[s] = h;
    if (!column_of[s] && schema[s].role != Role::kExcluded)
      fail(ErrorKind::kSchema, "missing required column \"" + schema[s].name + "\"");
  }
  std::optional<size_t> source_col;
  for (size_t h = 0; h < header.size(); ++h)
    if (header[h] == "source") {
      bool in_schema = false;
      for (const auto& f : schema) in_schema |= f.name == "source";
      if (!in_schema) source_col = h;
    }

  DataTable table(schema);
  std::vector<std::optional<double>> cells(schema.size());
  for (size_t li = 1; li < lines.size(); ++li) {
    const size_t row_number = li;  // 1-based data row
    auto fields = split_csv_line(lines[li]);
    require(fields.size() == header.size(), ErrorKind::kParse,
            "row " + std::to_string(row_number) + " has " + std::to_string(fields.size()) +
                " fields, header has " + std::to_string(header.size()));
    for (size_t s = 0; s < schema.size(); ++s) {
      cells[s].reset();
      if (!column_of[s]) continue;
      std::string_view raw = trim(fields[*column_of[s]]);
      if (raw.empty()) continue;
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(raw.data(), raw.data() + raw.size(), v);
      if (ec != std::errc() || ptr != raw.data() + raw.size() || !std::isfinite(v))
        fail(ErrorKind::kParse, "parse error at row " + std::to_string(row_number) +
                                    ", column \"" + schema[s].name + "\": cannot parse \"" +
                                    std::string(raw) + "\" as a number");
      cells[s] = v;
    }
    std::string provenance =
        source_col ? std::string(trim(fields[*source_col])) : std::string(default_provenance);
    table.append_row(cells, std::move(provenance));
  }
  return table;
}

DataTable load_csv(const std::filesystem::path& path, const Schema& schema) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorKind::kIo, "cannot open " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_csv(buffer.str(), schema, path.stem().string());
}

std::string to_csv(const DataTable& table) {
  std::string out;
  for (size_t c = 0; c < table.cols(); ++c) {
    out += quote_csv(table.schema()[c].name);
    out += ',';
  }
  out += "source\n";
  for (size_t r = 0; r < table.rows(); ++r) {
    for (size_t c = 0; c < table.cols(); ++c) {
      if (table.present(r, c)) out += stats::format_double(table.value(r, c));
      out += ',';
    }
    out += quote_csv(table.provenance(r));
    out += '\n';
  }
  return out;
}

void save_csv(const DataTable& table, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorKind::kIo, "cannot write " + path.string());
  out << to_csv(table);
  require(out.good(), ErrorKind::kIo, "failed writing " + path.string());
}

// ---- merge / split / folds --------------------------------------------------

DataTable merge_dedupe(std::span<const DataTable> tables) {
  require(!tables.empty(), ErrorKind::kMerge, "nothing to merge");
  std::vector<std::string> common;
  for (const auto& f : tables[0].schema()) {
    bool everywhere = true;
    for (const auto& t : tables) everywhere &= t.find_column(f.name).has_value();
    if (everywhere) common.push_back(f.name);
  }
  std::vector<DataTable> projected;
  for (const auto& t : tables) projected.push_back(t.project(common));
  for (size_t i = 1; i < projected.size(); ++i)
    require(projected[i].schema() == projected[0].schema(), ErrorKind::kMerge,
            "schema mismatch after projection to common features (table " +
                std::to_string(i) + ")");
  bool has_target = false;
  for (const auto& f : projected[0].schema()) has_target |= f.role == Role::kTarget;
  require(has_target, ErrorKind::kMerge, "target column is not shared by all tables");

  DataTable merged(projected[0].schema());
  std::unordered_set<std::string> seen;
  std::vector<std::optional<double>> cells(common.size());
  for (const auto& t : projected) {
    for (size_t r = 0; r < t.rows(); ++r) {
      std::string key;
      key.reserve(common.size() * 9);
      for (size_t c = 0; c < t.cols(); ++c) {
        cells[c] = t.cell(r, c);
        key.push_back(cells[c] ? '\1' : '\0');
        if (cells[c]) {
          const uint64_t bits = std::bit_cast<uint64_t>(*cells[c]);
          key.append(reinterpret_cast<const char*>(&bits), sizeof(bits));
        }
      }
      if (seen.insert(std::move(key)).second) merged.append_row(cells, t.provenance(r));
    }
  }
  return merged;
}

SplitIndex split_train_test(size_t row_count, double fraction, uint64_t seed) {
  require(fraction > 0.0 && fraction < 1.0, ErrorKind::kArgument,
          "train fraction must lie in (0, 1)");
  require(row_count > 0, ErrorKind::kArgument, "cannot split an empty table");
  std::vector<size_t> order(row_count);
  for (size_t i = 0; i < row_count; ++i) order[i] = i;
  Rng rng(mix_seed(seed, 0x5b11));
  rng.shuffle(order);
  const auto n_train = static_cast<size_t>(std::llround(fraction * static_cast<double>(row_count)));
  SplitIndex split;
  split.seed = seed;
  split.train_rows.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  split.test_rows.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  return split;
}

SplitIndex split_train_test(const DataTable& table, double fraction, uint64_t seed) {
  return split_train_test(table.rows(), fraction, seed);
}

std::vector<size_t> FoldPlan::rows_in(size_t f) const {
  std::vector<size_t> out;
  for (size_t i = 0; i < rows.size(); ++i)
    if (fold[i] == f) out.push_back(rows[i]);
  return out;
}

std::vector<size_t> FoldPlan::rows_outside(size_t f) const {
  std::vector<size_t> out;
  for (size_t i = 0; i < rows.size(); ++i)
    if (fold[i] != f) out.push_back(rows[i]);
  return out;
}

std::vector<size_t> FoldPlan::fold_sizes() const {
  std::vector<size_t> sizes(k, 0);
  for (size_t f : fold) ++sizes[f];
  return sizes;
}

FoldPlan make_folds(std::span<const size_t> rows, size_t k, uint64_t seed) {
  require(k >= 2, ErrorKind::kArgument, "fold count must be at least 2");
  require(k <= rows.size(), ErrorKind::kArgument,
          "fold count " + std::to_string(k) + " exceeds " + std::to_string(rows.size()) +
              " train rows");
  FoldPlan plan;
  plan.k = k;
  plan.rows.assign(rows.begin(), rows.end());
  Rng rng(mix_seed(seed, 0xf01d));
  rng.shuffle(plan.rows);
  plan.fold.resize(plan.rows.size());
  for (size_t i = 0; i < plan.rows.size(); ++i) plan.fold[i] = i % k;
  return plan;
}

FoldPlan make_folds(const SplitIndex& split, size_t k, uint64_t seed) {
  return make_folds(split.train_rows, k, seed);
}

// ---- synthetic generator ----------------------------------------------------

namespace {

const char* to_string(Distribution d) {
  switch (d) {
    case Distribution::kNormal: return "normal";
    case Distribution::kLogNormal: return "lognormal";
    case Distribution::kUniform: return "uniform";
  }
  return "normal";
}

Distribution distribution_from_string(const std::string& s) {
  if (s == "normal") return Distribution::kNormal;
  if (s == "lognormal") return Distribution::kLogNormal;
  if (s == "uniform") return Distribution::kUniform;
  fail(ErrorKind::kArgument, "unknown distribution \"" + s + "\"");
}

const char* to_string(TermKind k) {
  switch (k) {
    case TermKind::kLinear: return "linear";
    case TermKind::kTanh: return "tanh";
    case TermKind::kSquare: return "square";
  }
  return "linear";
}

TermKind term_from_string(const std::string& s) {
  if (s == "linear") return TermKind::kLinear;
  if (s == "tanh") return TermKind::kTanh;
  if (s == "square") return TermKind::kSquare;
  fail(ErrorKind::kArgument, "unknown target term kind \"" + s + "\"");
}

// Location and spread of the unshifted distribution, in the space where the
// shift is applied (log space for lognormal).
struct Moments {
  double center;
  double sd;
};

Moments reference_moments(const FeatureGenerator& g) {
  switch (g.distribution) {
    case Distribution::kNormal:
    case Distribution::kLogNormal:
      return {g.p1, g.p2};
    case Distribution::kUniform:
      return {0.5 * (g.p1 + g.p2), (g.p2 - g.p1) / std::sqrt(12.0)};
  }
  return {0.0, 1.0};
}

double standardize(const FeatureGenerator& g, double x) {
  const Moments m = reference_moments(g);
  const double v = g.distribution == Distribution::kLogNormal ? std::log(x) : x;
  return (v - m.center) / m.sd;
}

double round_to(double v, int decimals) {
  const double scale = std::pow(10.0, decimals);
  return std::round(v * scale) / scale;
}

void validate_generator(const FeatureGenerator& g) {
  const auto& name = g.schema.name;
  require(g.missing_rate >= 0.0 && g.missing_rate < 1.0, ErrorKind::kArgument,
          "feature \"" + name + "\": missing_rate must lie in [0, 1)");
  require(g.scale > 0.0, ErrorKind::kArgument, "feature \"" + name + "\": scale must be positive");
  if (g.distribution == Distribution::kUniform)
    require(g.p1 < g.p2, ErrorKind::kArgument, "feature \"" + name + "\": uniform low >= high");
  else
    require(g.p2 > 0.0, ErrorKind::kArgument, "feature \"" + name + "\": spread must be positive");
  const Moments m = reference_moments(g);
  double center = m.center + g.shift * m.sd;
  if (g.distribution == Distribution::kLogNormal) {
    center = std::exp(center);
    if (g.schema.upper_bound)
      require(*g.schema.upper_bound > 0.0, ErrorKind::kArgument,
              "feature \"" + name + "\": lognormal support lies above upper bound");
  }
  if (g.schema.lower_bound)
    require(center >= *g.schema.lower_bound, ErrorKind::kArgument,
            "feature \"" + name + "\": distribution center lies below lower bound");
  if (g.schema.upper_bound)
    require(center <= *g.schema.upper_bound, ErrorKind::kArgument,
            "feature \"" + name + "\": distribution center lies above upper bound");
}

double sample_feature(const FeatureGenerator& g, Rng& rng) {
  const Moments m = reference_moments(g);
  const double lo = g.schema.lower_bound.value_or(-std::numeric_limits<double>::infinity());
  const double hi = g.schema.upper_bound.value_or(std::numeric_limits<double>::infinity());
  for (int attempt = 0; attempt < 10000; ++attempt) {
    double x = 0.0;
    switch (g.distribution) {
      case Distribution::kNormal:
        x = m.center + g.shift * m.sd + g.scale * m.sd * rng.normal();
        break;
      case Distribution::kLogNormal:
        x = std::exp(m.center + g.shift * m.sd + g.scale * m.sd * rng.normal());
        break;
      case Distribution::kUniform:
        x = m.center + g.shift * m.sd + g.scale * (rng.uniform() - 0.5) * (g.p2 - g.p1);
        break;
    }
    if (x >= lo && x <= hi) return x;
  }
  fail(ErrorKind::kArgument,
       "feature \"" + g.schema.name + "\": distribution cannot satisfy its bounds");
}

}  // namespace

nlohmann::json synth_spec_to_json(const SynthSpec& spec) {
  nlohmann::json features = nlohmann::json::array();
  for (const auto& g : spec.features) {
    auto entry = schema_to_json({g.schema})["features"][0];
    entry["distribution"] = to_string(g.distribution);
    entry["params"] = {g.p1, g.p2};
    entry["missing_rate"] = g.missing_rate;
    entry["decimals"] = g.decimals ? nlohmann::json(*g.decimals) : nlohmann::json();
    entry["shift"] = g.shift;
    entry["scale"] = g.scale;
    features.push_back(std::move(entry));
  }
  nlohmann::json terms = nlohmann::json::array();
  for (const auto& t : spec.terms)
    terms.push_back({{"feature", t.feature}, {"weight", t.weight}, {"kind", to_string(t.kind)}});
  auto target = schema_to_json({spec.target})["features"][0];
  target["intercept"] = spec.intercept;
  target["noise_sd"] = spec.noise_sd;
  target["terms"] = terms;
  target["decimals"] =
      spec.target_decimals ? nlohmann::json(*spec.target_decimals) : nlohmann::json();
  target["missing_rate"] = spec.target_missing_rate;
  return {{"format", "rf_forge.synth"}, {"version", 1}, {"label", spec.label},
          {"features", features},      {"target", target}};
}

SynthSpec synth_spec_from_json(const nlohmann::json& doc) {
  SynthSpec spec;
  try {
    spec.label = doc.value("label", "synthetic");
    for (const auto& entry : doc.at("features")) {
      FeatureGenerator g;
      g.schema = schema_from_json(nlohmann::json::array(
          {entry, {{"name", "__target"}, {"role", "target"}}}))[0];
      g.distribution = distribution_from_string(entry.value("distribution", "normal"));
      const auto& params = entry.at("params");
      g.p1 = params.at(0).get<double>();
      g.p2 = params.at(1).get<double>();
      g.missing_rate = entry.value("missing_rate", 0.0);
      if (entry.contains("decimals") && !entry["decimals"].is_null())
        g.decimals = entry["decimals"].get<int>();
      g.shift = entry.value("shift", 0.0);
      g.scale = entry.value("scale", 1.0);
      spec.features.push_back(std::move(g));
    }
    const auto& target = doc.at("target");
    auto tj = target;
    tj["role"] = "target";
    spec.target = schema_from_json(nlohmann::json::array({tj}))[0];
    spec.intercept = target.value("intercept", 0.5);
    spec.noise_sd = target.value("noise_sd", 0.05);
    for (const auto& t : target.value("terms", nlohmann::json::array()))
      spec.terms.push_back({t.at("feature").get<std::string>(), t.at("weight").get<double>(),
                            term_from_string(t.value("kind", "linear"))});
    if (target.contains("decimals") && !target["decimals"].is_null())
      spec.target_decimals = target["decimals"].get<int>();
    spec.target_missing_rate = target.value("missing_rate", 0.0);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kArgument, std::string("malformed generator spec: ") + e.what());
  }
  return spec;
}

SynthSpec load_synth_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), ErrorKind::kIo, "cannot open generator spec " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kArgument, "cannot parse generator spec " + path.string() + ": " + e.what());
  }
  return synth_spec_from_json(doc);
}

SynthSpec default_oil_synth_spec() {
  const Schema schema = oil_schema();
  auto gen = [&](std::string_view name, Distribution d, double p1, double p2, double missing,
                 std::optional<int> decimals) {
    FeatureGenerator g;
    for (const auto& f : schema)
      if (f.name == name) g.schema = f;
    g.distribution = d;
    g.p1 = p1;
    g.p2 = p2;
    g.missing_rate = missing;
    g.decimals = decimals;
    return g;
  };
  using D = Distribution;
  SynthSpec spec;
  spec.label = "synthetic_oil";
  spec.features = {
      gen("api_gravity", D::kNormal, 33.0, 6.0, 0.10, 1),
      gen("bo", D::kNormal, 1.3, 0.15, 0.15, 2),
      gen("gor", D::kLogNormal, std::log(0.8), 0.8, 0.15, 2),
      gen("sw", D::kNormal, 0.30, 0.08, 0.10, 2),
      gen("temperature", D::kNormal, 180.0, 30.0, 0.05, 0),
      gen("pressure", D::kLogNormal, std::log(3800.0), 0.3, 0.05, 0),
      gen("thickness", D::kLogNormal, std::log(40.0), 0.6, 0.03, 0),
      gen("reserves", D::kLogNormal, std::log(2e7), 1.0, 0.02, std::nullopt),
      gen("permeability", D::kLogNormal, std::log(150.0), 1.2, 0.10, 1),
      gen("porosity", D::kNormal, 0.22, 0.05, 0.05, 3),
      gen("area", D::kLogNormal, std::log(800.0), 0.8, 0.03, 0),
  };
  spec.target = schema.back();
  spec.intercept = 0.32;
  spec.noise_sd = 0.05;
  spec.terms = {
      {"reserves", 0.070, TermKind::kLinear},  {"area", 0.050, TermKind::kLinear},
      {"thickness", 0.040, TermKind::kLinear}, {"porosity", 0.020, TermKind::kTanh},
      {"permeability", 0.015, TermKind::kLinear}, {"sw", -0.010, TermKind::kLinear},
  };
  spec.target_decimals = 3;
  spec.target_missing_rate = 0.02;
  return spec;
}

SynthSpec with_shift(SynthSpec spec, std::span<const std::string> features, double sds,
                     std::string label) {
  for (const auto& name : features) {
    bool found = false;
    for (auto& g : spec.features)
      if (g.schema.name == name) {
        g.shift = sds;
        found = true;
      }
    require(found, ErrorKind::kArgument, "cannot shift unknown feature \"" + name + "\"");
  }
  spec.label = std::move(label);
  return spec;
}

Schema synth_schema(const SynthSpec& spec) {
  Schema schema;
  for (const auto& g : spec.features) schema.push_back(g.schema);
  schema.push_back(spec.target);
  schema.back().role = Role::kTarget;
  validate_schema(schema);
  return schema;
}

DataTable synth_generate(const SynthSpec& spec, size_t n, uint64_t seed) {
  Schema schema = synth_schema(spec);
  for (const auto& g : spec.features) validate_generator(g);
  require(spec.noise_sd >= 0.0, ErrorKind::kArgument, "noise_sd must be non-negative");
  require(spec.target_missing_rate >= 0.0 && spec.target_missing_rate < 1.0,
          ErrorKind::kArgument, "target missing_rate must lie in [0, 1)");
  std::vector<size_t> term_feature;
  for (const auto& t : spec.terms) {
    std::optional<size_t> idx;
    for (size_t j = 0; j < spec.features.size(); ++j)
      if (spec.features[j].schema.name == t.feature) idx = j;
    require(idx.has_value(), ErrorKind::kArgument,
            "target term references unknown feature \"" + t.feature + "\"");
    term_feature.push_back(*idx);
  }
  const double t_lo = spec.target.lower_bound.value_or(-std::numeric_limits<double>::infinity());
  const double t_hi = spec.target.upper_bound.value_or(std::numeric_limits<double>::infinity());

  Rng value_rng(mix_seed(seed, 1));
  Rng noise_rng(mix_seed(seed, 2));
  Rng missing_rng(mix_seed(seed, 3));
  DataTable table(schema);
  std::vector<double> raw(spec.features.size());
  std::vector<std::optional<double>> cells(schema.size());
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = 0; j < spec.features.size(); ++j) {
      const auto& g = spec.features[j];
      raw[j] = sample_feature(g, value_rng);
      double v = raw[j];
      if (g.decimals) {
        v = round_to(v, *g.decimals);
        if (g.schema.lower_bound) v = std::max(v, *g.schema.lower_bound);
        if (g.schema.upper_bound) v = std::min(v, *g.schema.upper_bound);
      }
      cells[j] = v;
    }
    double y = spec.intercept;
    for (size_t t = 0; t < spec.terms.size(); ++t) {
      const double z = standardize(spec.features[term_feature[t]], raw[term_feature[t]]);
      switch (spec.terms[t].kind) {
        case TermKind::kLinear: y += spec.terms[t].weight * z; break;
        case TermKind::kTanh: y += spec.terms[t].weight * std::tanh(z); break;
        case TermKind::kSquare: y += spec.terms[t].weight * z * z; break;
      }
    }
    y += spec.noise_sd * noise_rng.normal();
    y = std::clamp(y, t_lo, t_hi);
    if (spec.target_decimals) y = std::clamp(round_to(y, *spec.target_decimals), t_lo, t_hi);
    cells.back() = y;
    for (size_t j = 0; j < spec.features.size(); ++j)
      if (missing_rng.uniform() < spec.features[j].missing_rate) cells[j].reset();
    if (missing_rng.uniform() < spec.target_missing_rate) cells.back().reset();
    table.append_row(cells, spec.label);
  }
  return table;
}

}  // namespace rfforge
