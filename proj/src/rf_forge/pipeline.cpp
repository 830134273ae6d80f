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

#include "rf_forge/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cinttypes>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

#include "rf_forge/explain.hpp"
#include "rf_forge/rng.hpp"
#include "rf_forge/shift_audit.hpp"
#include "rf_forge/stats.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace rfforge {

// ---- files -----------------------------------------------------------------

std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kIo, "cannot open \"" + path.string() + "\" for reading");
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) fail(ErrorKind::kIo, "error while reading \"" + path.string() + "\"");
  return buf.str();
}

void write_text_file(const fs::path& path, const std::string& text) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::kIo, "cannot open \"" + path.string() + "\" for writing");
  out << text;
  out.flush();
  if (!out) fail(ErrorKind::kIo, "error while writing \"" + path.string() + "\"");
}

std::string fnv1a_hex(const std::string& text) {
  uint64_t hash = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    hash ^= ch;
    hash *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016" PRIx64, hash);
  return buf;
}

unsigned resolve_threads(std::optional<int> flag) {
  if (flag) {
    require(*flag >= 1, ErrorKind::kConfig, "--threads must be >= 1");
    return static_cast<unsigned>(*flag);
  }
  if (const char* env = std::getenv("RF_FORGE_THREADS"); env != nullptr && *env != '\0') {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    require(end != env && *end == '\0' && v >= 1, ErrorKind::kConfig,
            "RF_FORGE_THREADS must be a positive integer");
    return static_cast<unsigned>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

void emit_scatter(std::span<const double> measured, std::span<const double> estimated,
                  const fs::path& path) {
  require(measured.size() == estimated.size(), ErrorKind::kShape,
          "scatter vectors differ in length");
  std::ostringstream out;
  out << "measured,estimated\n";
  double lo = INFINITY, hi = -INFINITY;
  size_t on_line = 0;
  for (size_t i = 0; i < measured.size(); ++i) {
    out << stats::format_double(measured[i]) << ',' << stats::format_double(estimated[i]) << '\n';
    lo = std::min({lo, measured[i], estimated[i]});
    hi = std::max({hi, measured[i], estimated[i]});
    if (measured[i] == estimated[i]) ++on_line;
  }
  write_text_file(path, out.str());
  json meta = {{"reference_line", {{"slope", 1.0}, {"intercept", 0.0}}},
               {"n", measured.size()},
               {"points_on_line", on_line},
               {"x_column", "measured"},
               {"y_column", "estimated"}};
  if (!measured.empty()) meta["range"] = {lo, hi};
  write_text_file(fs::path(path.string() + ".meta.json"), meta.dump(2) + "\n");
}

// ---- stages ----------------------------------------------------------------

namespace {

const std::vector<std::pair<Stage, const char*>>& stage_table() {
  static const std::vector<std::pair<Stage, const char*>> table{
      {Stage::kIngest, "ingest"},   {Stage::kClean, "clean"},     {Stage::kSplit, "split"},
      {Stage::kImpute, "impute"},   {Stage::kScreen, "screen"},   {Stage::kTransform, "transform"},
      {Stage::kTune, "tune"},       {Stage::kTrain, "train"},     {Stage::kEval, "eval"},
      {Stage::kCurve, "curve"},     {Stage::kExplain, "explain"}, {Stage::kAudit, "audit"}};
  return table;
}

}  // namespace

const char* to_string(Stage stage) {
  for (const auto& [s, name] : stage_table())
    if (s == stage) return name;
  return "unknown";
}

Stage stage_from_string(const std::string& name) {
  for (const auto& [s, n] : stage_table())
    if (name == n) return s;
  fail(ErrorKind::kConfig, "unknown stage \"" + name + "\"");
}

const std::vector<Stage>& all_stages() {
  static const std::vector<Stage> stages = [] {
    std::vector<Stage> out;
    for (const auto& [s, name] : stage_table()) out.push_back(s);
    return out;
  }();
  return stages;
}

// ---- configuration ---------------------------------------------------------

namespace {

class ConfigReader {
 public:
  ConfigReader(const json& doc, fs::path base) : doc_(doc), base_(std::move(base)) {}

  std::vector<std::string> errors;

  void error(const std::string& message) { errors.push_back(message); }

  const json* section(const json& obj, const std::string& key, const std::string& where) {
    if (!obj.contains(key)) return nullptr;
    const auto& v = obj.at(key);
    if (!v.is_object()) {
      error("\"" + where + key + "\" must be an object");
      return nullptr;
    }
    return &v;
  }

  template <typename T>
  void read(const json& obj, const std::string& key, T& out, const std::string& where) {
    if (!obj.contains(key) || obj.at(key).is_null()) return;
    try {
      out = obj.at(key).get<T>();
    } catch (const json::exception&) {
      error("\"" + where + key + "\" has the wrong type");
    }
  }

  void known_keys(const json& obj, const std::set<std::string>& keys, const std::string& where) {
    for (const auto& [k, v] : obj.items())
      if (!keys.count(k)) error("unknown key \"" + where + k + "\"");
  }

  fs::path resolve(const std::string& p) const {
    fs::path path(p);
    return path.is_absolute() ? path : base_ / path;
  }

 private:
  const json& doc_;
  fs::path base_;
};

std::optional<GridSpec> read_grid(ConfigReader& rd, const json& obj, const std::string& where,
                                  ModelFamily family) {
  if (!obj.contains("grid")) return std::nullopt;
  const auto& g = obj.at("grid");
  GridSpec grid;
  try {
    for (const auto& axis : g.at("axes"))
      grid.axes.push_back({axis.at("name").get<std::string>(), axis.at("values").get<std::vector<double>>()});
    if (g.contains("stages")) grid.stages = g.at("stages").get<std::vector<std::vector<std::string>>>();
  } catch (const json::exception&) {
    rd.error("\"" + where + "grid\" must hold \"axes\" as [{name, values}] and optional \"stages\"");
    return std::nullopt;
  }
  try {
    validate(grid, family);
  } catch (const Error& e) {
    rd.error("\"" + where + "grid\": " + e.what());
    return std::nullopt;
  }
  return grid;
}

std::vector<ModelFamily> read_families(ConfigReader& rd, const json& obj, const std::string& key) {
  std::vector<ModelFamily> out;
  std::vector<std::string> names;
  rd.read(obj, key, names, "");
  for (const auto& n : names) {
    try {
      const auto f = family_from_string(n);
      if (std::find(out.begin(), out.end(), f) == out.end()) out.push_back(f);
    } catch (const Error& e) {
      rd.error("\"" + key + "\": " + e.what());
    }
  }
  return out;
}

}  // namespace

ConfigResult validate_config_json(const json& doc, const fs::path& base_dir) {
  ConfigResult result;
  ConfigReader rd(doc, base_dir);
  if (!doc.is_object()) {
    result.errors.push_back("configuration must be a JSON object");
    return result;
  }
  RunConfig cfg;
  cfg.document = doc;
  rd.known_keys(doc,
                {"schema", "databases", "train_test", "independent", "models", "gbdt", "svr", "mlr",
                 "split_fraction", "seed", "folds", "curve", "capping", "sparse_threshold", "impute",
                 "screen", "transform", "explain", "audit", "output"},
                "");

  if (!doc.contains("schema")) {
    rd.error("missing required key \"schema\"");
  } else {
    std::string p;
    rd.read(doc, "schema", p, "");
    if (!p.empty()) {
      cfg.schema_path = rd.resolve(p);
      if (!fs::exists(cfg.schema_path)) rd.error("\"schema\": file not found: " + cfg.schema_path.string());
    }
  }

  if (!doc.contains("databases")) {
    rd.error("missing required key \"databases\"");
  } else if (const json* dbs = rd.section(doc, "databases", "")) {
    for (const auto& [name, value] : dbs->items()) {
      if (!value.is_string()) {
        rd.error("\"databases." + name + "\" must be a path string");
        continue;
      }
      DatabaseRef ref{name, rd.resolve(value.get<std::string>())};
      if (!fs::exists(ref.path)) rd.error("\"databases." + name + "\": file not found: " + ref.path.string());
      cfg.databases.push_back(std::move(ref));
    }
  }
  auto known_db = [&](const std::string& n) {
    return std::any_of(cfg.databases.begin(), cfg.databases.end(),
                       [&](const DatabaseRef& d) { return d.name == n; });
  };
  auto path_of = [&](const std::string& n) {
    for (const auto& d : cfg.databases)
      if (d.name == n) return d.path;
    return fs::path();
  };

  if (!doc.contains("train_test")) rd.error("missing required key \"train_test\"");
  rd.read(doc, "train_test", cfg.train_test, "");
  rd.read(doc, "independent", cfg.independent, "");
  if (doc.contains("train_test") && cfg.train_test.empty()) rd.error("\"train_test\" names no database");
  for (const auto& n : cfg.train_test)
    if (!known_db(n)) rd.error("\"train_test\" names unknown database \"" + n + "\"");
  for (const auto& n : cfg.independent) {
    if (!known_db(n)) rd.error("\"independent\" names unknown database \"" + n + "\"");
    if (std::find(cfg.train_test.begin(), cfg.train_test.end(), n) != cfg.train_test.end())
      rd.error("database \"" + n + "\" appears in both \"train_test\" and \"independent\"");
    else if (known_db(n))
      for (const auto& t : cfg.train_test)
        if (known_db(t) && fs::exists(path_of(n)) && fs::exists(path_of(t)) &&
            fs::equivalent(path_of(n), path_of(t)))
          rd.error("independent database \"" + n + "\" is the same file as \"" + t + "\"");
  }

  if (doc.contains("models")) cfg.models = read_families(rd, doc, "models");
  else cfg.models = {ModelFamily::kGbdt, ModelFamily::kSvr, ModelFamily::kMlr};
  if (cfg.models.empty()) rd.error("\"models\" names no model family");

  for (ModelFamily fam : {ModelFamily::kGbdt, ModelFamily::kSvr, ModelFamily::kMlr}) {
    FamilyConfig fc;
    fc.spec.family = fam;
    const std::string key = to_string(fam);
    if (const json* sec = rd.section(doc, key, "")) {
      const std::string where = key + ".";
      if (fam == ModelFamily::kMlr) {
        rd.known_keys(*sec, {"p_enter"}, where);
        rd.read(*sec, "p_enter", fc.spec.p_enter, where);
        if (!(fc.spec.p_enter > 0.0 && fc.spec.p_enter <= 1.0)) rd.error("\"mlr.p_enter\" must lie in (0, 1]");
      } else {
        rd.known_keys(*sec, {"params", "grid"}, where);
        if (sec->contains("params")) {
          try {
            if (fam == ModelFamily::kGbdt) {
              fc.spec.gbdt = gbdt_params_from_json(sec->at("params"));
              validate(fc.spec.gbdt);
            } else {
              fc.spec.svr = svr_params_from_json(sec->at("params"));
              validate(fc.spec.svr);
            }
          } catch (const Error& e) {
            rd.error("\"" + where + "params\": " + e.what());
          }
        }
        fc.grid = read_grid(rd, *sec, where, fam);
      }
    }
    cfg.families[fam] = fc;
  }

  rd.read(doc, "split_fraction", cfg.split_fraction, "");
  if (!(cfg.split_fraction > 0.0 && cfg.split_fraction < 1.0)) rd.error("\"split_fraction\" must lie in (0, 1)");
  rd.read(doc, "seed", cfg.seed, "");
  if (doc.contains("folds") && !doc.at("folds").is_null()) {
    if (doc.at("folds").is_number_integer()) {
      const auto k = doc.at("folds").get<long long>();
      if (k < 2) rd.error("\"folds\" must be >= 2");
      else cfg.folds = static_cast<size_t>(k);
    } else if (!(doc.at("folds").is_string() && doc.at("folds") == "auto")) {
      rd.error("\"folds\" must be an integer >= 2 or \"auto\"");
    }
  }

  cfg.curve_models = {ModelFamily::kGbdt};
  if (const json* sec = rd.section(doc, "curve", "")) {
    rd.known_keys(*sec, {"stride", "models"}, "curve.");
    long long stride = static_cast<long long>(cfg.curve_stride);
    rd.read(*sec, "stride", stride, "curve.");
    if (stride < 1) rd.error("\"curve.stride\" must be >= 1");
    else cfg.curve_stride = static_cast<size_t>(stride);
    if (sec->contains("models")) cfg.curve_models = read_families(rd, *sec, "models");
  }

  cfg.capping.lower_percentile = 0.5;
  cfg.capping.upper_percentile = 99.5;
  if (const json* sec = rd.section(doc, "capping", "")) {
    rd.known_keys(*sec, {"use_schema_bounds", "lower_percentile", "upper_percentile", "include_target", "overrides"},
                  "capping.");
    rd.read(*sec, "use_schema_bounds", cfg.capping.use_schema_bounds, "capping.");
    rd.read(*sec, "include_target", cfg.capping.include_target, "capping.");
    for (const char* side : {"lower_percentile", "upper_percentile"}) {
      auto& slot = std::string(side) == "lower_percentile" ? cfg.capping.lower_percentile
                                                           : cfg.capping.upper_percentile;
      if (!sec->contains(side)) continue;
      if (sec->at(side).is_null()) {
        slot.reset();
      } else if (sec->at(side).is_number()) {
        slot = sec->at(side).get<double>();
        if (*slot < 0.0 || *slot > 100.0) rd.error(std::string("\"capping.") + side + "\" must lie in [0, 100]");
      } else {
        rd.error(std::string("\"capping.") + side + "\" must be a number or null");
      }
    }
    if (const json* ov = rd.section(*sec, "overrides", "capping.")) {
      for (const auto& [name, pair] : ov->items()) {
        if (!pair.is_array() || pair.size() != 2) {
          rd.error("\"capping.overrides." + name + "\" must be [lower, upper] with null for none");
          continue;
        }
        std::optional<double> lo, hi;
        if (!pair[0].is_null()) lo = pair[0].get<double>();
        if (!pair[1].is_null()) hi = pair[1].get<double>();
        cfg.capping.overrides[name] = {lo, hi};
      }
    }
  }

  rd.read(doc, "sparse_threshold", cfg.sparse_threshold, "");
  if (!(cfg.sparse_threshold >= 0.0 && cfg.sparse_threshold <= 1.0)) rd.error("\"sparse_threshold\" must lie in [0, 1]");
  if (const json* sec = rd.section(doc, "impute", "")) {
    rd.known_keys(*sec, {"base_window", "max_missing_ratio", "sort_key"}, "impute.");
    long long window = static_cast<long long>(cfg.impute.base_window);
    rd.read(*sec, "base_window", window, "impute.");
    if (window < 1) rd.error("\"impute.base_window\" must be >= 1");
    else cfg.impute.base_window = static_cast<size_t>(window);
    rd.read(*sec, "max_missing_ratio", cfg.impute.max_missing_ratio, "impute.");
    if (!(cfg.impute.max_missing_ratio > 0.0 && cfg.impute.max_missing_ratio <= 1.0))
      rd.error("\"impute.max_missing_ratio\" must lie in (0, 1]");
    rd.read(*sec, "sort_key", cfg.impute.sort_key, "impute.");
  }
  cfg.screen_apply = {ModelFamily::kSvr, ModelFamily::kMlr};
  if (const json* sec = rd.section(doc, "screen", "")) {
    rd.known_keys(*sec, {"threshold", "apply_to"}, "screen.");
    rd.read(*sec, "threshold", cfg.screen_threshold, "screen.");
    if (sec->contains("apply_to")) cfg.screen_apply = read_families(rd, *sec, "apply_to");
  }
  if (!(cfg.screen_threshold > 0.0 && cfg.screen_threshold <= 1.0)) rd.error("\"screen.threshold\" must lie in (0, 1]");

  if (const json* sec = rd.section(doc, "transform", "")) {
    rd.known_keys(*sec, {"order", "range"}, "transform.");
    std::string order = "gauss_then_minmax";
    rd.read(*sec, "order", order, "transform.");
    if (order == "gauss_then_minmax") cfg.transform_order = TransformOrder::kGaussThenMinMax;
    else if (order == "minmax_only") cfg.transform_order = TransformOrder::kMinMaxOnly;
    else rd.error("\"transform.order\" must be \"gauss_then_minmax\" or \"minmax_only\"");
    std::vector<double> range{cfg.range_min, cfg.range_max};
    rd.read(*sec, "range", range, "transform.");
    if (range.size() != 2 || !(range[0] < range[1])) rd.error("\"transform.range\" must be [min, max] with min < max");
    else {
      cfg.range_min = range[0];
      cfg.range_max = range[1];
    }
  }

  if (const json* sec = rd.section(doc, "explain", "")) {
    rd.known_keys(*sec, {"samples", "background", "n_coalitions"}, "explain.");
    for (auto [key, slot] : {std::pair<const char*, size_t*>{"samples", &cfg.explain_samples},
                             {"background", &cfg.explain_background},
                             {"n_coalitions", &cfg.n_coalitions}}) {
      long long v = static_cast<long long>(*slot);
      rd.read(*sec, key, v, "explain.");
      if (v < 1) rd.error(std::string("\"explain.") + key + "\" must be >= 1");
      else *slot = static_cast<size_t>(v);
    }
  }
  if (const json* sec = rd.section(doc, "audit", "")) {
    rd.known_keys(*sec, {"alpha"}, "audit.");
    rd.read(*sec, "alpha", cfg.alpha, "audit.");
  }
  if (!(cfg.alpha > 0.0 && cfg.alpha < 1.0)) rd.error("\"audit.alpha\" must lie in (0, 1)");

  std::string output = "run";
  rd.read(doc, "output", output, "");
  cfg.output_dir = rd.resolve(output);

  result.errors = std::move(rd.errors);
  if (result.errors.empty()) result.config = std::move(cfg);
  return result;
}

ConfigResult validate_config(const fs::path& path) {
  ConfigResult result;
  std::string text;
  try {
    text = read_text_file(path);
  } catch (const Error& e) {
    result.errors.push_back(e.what());
    return result;
  }
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    result.errors.push_back("configuration is not valid JSON: " + std::string(e.what()));
    return result;
  }
  const fs::path base = path.has_parent_path() ? path.parent_path() : fs::path(".");
  return validate_config_json(doc, base);
}

// ---- manifest --------------------------------------------------------------

std::vector<std::string> RunManifest::artifacts() const {
  std::vector<std::string> out;
  for (const auto& s : stages) out.insert(out.end(), s.artifacts.begin(), s.artifacts.end());
  return out;
}

json RunManifest::to_json() const {
  json stage_list = json::array();
  for (const auto& s : stages)
    stage_list.push_back({{"name", s.name}, {"seconds", s.seconds}, {"artifacts", s.artifacts}});
  json doc = {{"format", "rf_forge.manifest"},
              {"version", version},
              {"config_hash", config_hash},
              {"seed", seed},
              {"status", status},
              {"stages", stage_list},
              {"artifacts", artifacts()},
              {"transform_fingerprints", fingerprints},
              {"evaluations", evaluations}};
  if (!failed_stage.empty()) {
    doc["failed_stage"] = failed_stage;
    doc["error"] = error;
  }
  return doc;
}

RunManifest RunManifest::from_json(const json& doc) {
  RunManifest m;
  try {
    m.version = doc.at("version").get<std::string>();
    m.config_hash = doc.at("config_hash").get<std::string>();
    m.seed = doc.at("seed").get<uint64_t>();
    m.status = doc.at("status").get<std::string>();
    m.fingerprints = doc.value("transform_fingerprints", json::object());
    m.evaluations = doc.value("evaluations", json::array());
    for (const auto& s : doc.at("stages"))
      m.stages.push_back({s.at("name").get<std::string>(), s.at("seconds").get<double>(),
                          s.at("artifacts").get<std::vector<std::string>>()});
  } catch (const json::exception& e) {
    fail(ErrorKind::kData, std::string("malformed manifest: ") + e.what());
  }
  return m;
}

// ---- pipeline --------------------------------------------------------------

namespace {

struct State {
  Schema schema;
  DataTable pool;
  DataTable independent;
  bool has_independent = false;
  DataTable train_raw;
  DataTable test_raw;
  DataTable train;
  DataTable test;
  FittedTransform transform;
  DataTable train_s;
  DataTable test_s;
  DataTable independent_s;
  std::map<ModelFamily, ModelSpec> tuned;
  std::map<ModelFamily, TrainedModel> models;
  std::map<ModelFamily, std::vector<size_t>> columns;  // model inputs after screening
};

class Runner {
 public:
  Runner(const RunConfig& cfg, const RunOptions& opt, RunManifest& manifest, fs::path root)
      : cfg_(cfg), opt_(opt), manifest_(manifest), root_(std::move(root)) {
    seed_ = opt.seed.value_or(cfg.seed);
  }

  void run(Stage stage) { dispatch(stage, false); }
  void load(Stage stage) { dispatch(stage, true); }
  std::vector<std::string> take_artifacts() { return std::exchange(artifacts_, {}); }

 private:
  void dispatch(Stage stage, bool loading) {
    loading_ = loading;
    switch (stage) {
      case Stage::kIngest: ingest(); break;
      case Stage::kClean: clean(); break;
      case Stage::kSplit: split(); break;
      case Stage::kImpute: impute(); break;
      case Stage::kScreen: screen(); break;
      case Stage::kTransform: transform(); break;
      case Stage::kTune: tune(); break;
      case Stage::kTrain: train(); break;
      case Stage::kEval: evaluate_stage(); break;
      case Stage::kCurve: curve(); break;
      case Stage::kExplain: explain(); break;
      case Stage::kAudit: audit_stage(); break;
    }
  }

  fs::path path(const std::string& rel) const { return root_ / rel; }

  void put(const std::string& rel, const std::string& text) {
    write_text_file(path(rel), text);
    artifacts_.push_back(rel);
  }
  void put_json(const std::string& rel, const json& doc) { put(rel, doc.dump(2) + "\n"); }
  void put_table(const std::string& rel, const DataTable& t) { put(rel, to_csv(t)); }

  DataTable get_table(const std::string& rel) const {
    return parse_csv(read_text_file(path(rel)), state_.schema, "");
  }
  json get_json(const std::string& rel) const {
    try {
      return json::parse(read_text_file(path(rel)));
    } catch (const json::parse_error& e) {
      fail(ErrorKind::kData, "cannot parse \"" + path(rel).string() + "\": " + e.what());
    }
  }

  DataTable read_database(const std::string& name) const {
    for (const auto& d : cfg_.databases)
      if (d.name == name) return parse_csv(read_text_file(d.path), state_.schema, name);
    fail(ErrorKind::kConfig, "unknown database \"" + name + "\"");
  }

  const std::vector<size_t>& inputs(ModelFamily fam) const { return state_.columns.at(fam); }
  std::vector<std::string> input_names(ModelFamily fam) const {
    std::vector<std::string> out;
    for (size_t c : inputs(fam)) out.push_back(state_.schema[c].name);
    return out;
  }
  Matrix features(const DataTable& t, ModelFamily fam) const { return t.to_matrix(inputs(fam)); }
  std::vector<double> target(const DataTable& t) const { return t.column_values(t.target_index()); }

  void ingest() {
    state_.schema = load_schema(cfg_.schema_path);
    state_.has_independent = !cfg_.independent.empty();
    if (loading_) {
      state_.pool = get_table("ingest/train_test.csv");
      if (state_.has_independent) state_.independent = get_table("ingest/independent.csv");
      return;
    }
    std::vector<DataTable> pool_parts, indep_parts;
    json counts = json::object();
    for (const auto& n : cfg_.train_test) {
      pool_parts.push_back(read_database(n));
      counts[n] = pool_parts.back().rows();
    }
    for (const auto& n : cfg_.independent) {
      indep_parts.push_back(read_database(n));
      counts[n] = indep_parts.back().rows();
    }
    state_.pool = merge_dedupe(pool_parts);
    size_t indep_raw = 0, indep_overlap = 0;
    if (state_.has_independent) {
      const DataTable indep = merge_dedupe(indep_parts);
      indep_raw = indep.rows();
      const std::vector<DataTable> both{state_.pool, indep};
      const DataTable merged = merge_dedupe(both);
      std::vector<size_t> rest(merged.rows() - state_.pool.rows());
      std::iota(rest.begin(), rest.end(), state_.pool.rows());
      state_.independent = merged.select_rows(rest);
      indep_overlap = indep_raw - state_.independent.rows();
    }
    size_t pool_raw = 0;
    for (const auto& t : pool_parts) pool_raw += t.rows();
    put_table("ingest/train_test.csv", state_.pool);
    if (state_.has_independent) put_table("ingest/independent.csv", state_.independent);
    put_json("ingest/ingest.json", {{"database_rows", counts},
                                    {"train_test_rows", state_.pool.rows()},
                                    {"train_test_duplicates_removed", pool_raw - state_.pool.rows()},
                                    {"independent_rows", state_.independent.rows()},
                                    {"independent_overlap_removed", indep_overlap}});
  }

  void clean() {
    if (loading_) {
      state_.pool = get_table("clean/train_test.csv");
      if (state_.has_independent) state_.independent = get_table("clean/independent.csv");
      return;
    }
    const size_t start = state_.pool.rows();
    DataTable pool = drop_missing_target(state_.pool);
    const size_t after_target = pool.rows();
    auto capped = cap_features(pool, cfg_.capping);
    const size_t after_cap = capped.table.rows();
    state_.pool = drop_sparse_rows(capped.table, cfg_.sparse_threshold);
    json report = {{"train_test",
                    {{"rows_in", start},
                     {"missing_target_removed", start - after_target},
                     {"capping_removed", after_target - after_cap},
                     {"sparse_removed", after_cap - state_.pool.rows()},
                     {"rows_out", state_.pool.rows()}}},
                   {"bounds", to_json(capped.bounds)}};
    if (state_.has_independent) {
      // Independent rows: physical bounds only, no imputation.
      const size_t in = state_.independent.rows();
      DataTable indep = drop_missing_target(state_.independent);
      std::vector<ResolvedBound> schema_bounds;
      for (const auto& f : state_.schema) {
        if (f.role == Role::kExcluded) continue;
        schema_bounds.push_back({f.name, f.lower_bound.value_or(-INFINITY), f.upper_bound.value_or(INFINITY),
                                 f.lower_bound ? "schema" : "none", f.upper_bound ? "schema" : "none", 0});
      }
      const size_t after_t = indep.rows();
      indep = apply_bounds(indep, schema_bounds);
      const size_t after_b = indep.rows();
      state_.independent = drop_incomplete_rows(indep);
      report["independent"] = {{"rows_in", in},
                               {"missing_target_removed", in - after_t},
                               {"bounds_removed", after_t - after_b},
                               {"incomplete_removed", after_b - state_.independent.rows()},
                               {"rows_out", state_.independent.rows()}};
      put_table("clean/independent.csv", state_.independent);
    }
    put_table("clean/train_test.csv", state_.pool);
    put_json("clean/clean.json", report);
  }

  void split() {
    if (loading_) {
      state_.train_raw = get_table("split/train.csv");
      state_.test_raw = get_table("split/test.csv");
      return;
    }
    const auto idx = split_train_test(state_.pool, cfg_.split_fraction, seed_);
    state_.train_raw = state_.pool.select_rows(idx.train_rows);
    state_.test_raw = state_.pool.select_rows(idx.test_rows);
    put_table("split/train.csv", state_.train_raw);
    put_table("split/test.csv", state_.test_raw);
    put_json("split/split.json", {{"seed", seed_},
                                  {"fraction", cfg_.split_fraction},
                                  {"train_rows", idx.train_rows},
                                  {"test_rows", idx.test_rows}});
  }

  void impute() {
    if (loading_) {
      state_.train = get_table("impute/train.csv");
      state_.test = get_table("impute/test.csv");
      return;
    }
    auto tr = windowed_mode_impute(state_.train_raw, cfg_.impute);
    auto te = windowed_mode_impute(state_.test_raw, cfg_.impute);
    state_.train = std::move(tr.table);
    state_.test = std::move(te.table);
    put_table("impute/train.csv", state_.train);
    put_table("impute/test.csv", state_.test);
    put_json("impute/impute_train.json", to_json(tr.audit));
    put_json("impute/impute_test.json", to_json(te.audit));
  }

  void screen() {
    std::vector<std::string> dropped;
    if (loading_) {
      dropped = get_json("screen/screen.json").at("dropped").get<std::vector<std::string>>();
    } else {
      const auto report = screen_collinear(state_.train, cfg_.screen_threshold);
      dropped = report.dropped;
      json doc = to_json(report);
      json applied = json::array();
      for (ModelFamily fam : cfg_.screen_apply) applied.push_back(to_string(fam));
      doc["applied_to"] = applied;
      put_json("screen/screen.json", doc);
    }
    for (ModelFamily fam : {ModelFamily::kGbdt, ModelFamily::kSvr, ModelFamily::kMlr}) {
      const bool apply = std::find(cfg_.screen_apply.begin(), cfg_.screen_apply.end(), fam) !=
                         cfg_.screen_apply.end();
      auto& cols = state_.columns[fam];
      cols.clear();
      for (size_t c : state_.train.input_indices())
        if (!apply || std::find(dropped.begin(), dropped.end(), state_.schema[c].name) == dropped.end())
          cols.push_back(c);
    }
  }

  void transform() {
    if (loading_) {
      state_.transform = FittedTransform::from_json(get_json("transform/transform.json"));
    } else {
      state_.transform = FittedTransform::fit(state_.train, cfg_.range_min, cfg_.range_max, cfg_.transform_order);
    }
    const std::string fitted = state_.transform.fingerprint();
    state_.train_s = state_.transform.apply(state_.train);
    state_.test_s = state_.transform.apply(state_.test);
    if (state_.has_independent) state_.independent_s = state_.transform.apply(state_.independent);
    manifest_.fingerprints = {{"fit", fitted},
                              {"after_apply_test", state_.transform.fingerprint()},
                              {"after_apply_independent",
                               state_.has_independent ? json(state_.transform.fingerprint()) : json(nullptr)}};
    require(manifest_.fingerprints["after_apply_test"] == fitted, ErrorKind::kData,
            "transform changed while being applied");
    if (loading_) return;
    put_json("transform/transform.json", state_.transform.to_json());
    put_table("transform/train.csv", state_.train_s);
    put_table("transform/test.csv", state_.test_s);
    if (state_.has_independent) put_table("transform/independent.csv", state_.independent_s);
  }

  ModelSpec base_spec(ModelFamily fam) const {
    ModelSpec spec = cfg_.families.at(fam).spec;
    if (fam == ModelFamily::kGbdt) {
      const auto& d = cfg_.document;
      const bool explicit_seed = d.contains("gbdt") && d["gbdt"].contains("params") &&
                                 d["gbdt"]["params"].contains("seed");
      if (!explicit_seed) spec.gbdt.seed = mix_seed(seed_, 2);
    }
    return spec;
  }

  void tune() {
    if (loading_) {
      const json doc = get_json("tune/tuned.json");
      for (ModelFamily fam : cfg_.models) {
        ModelSpec spec = base_spec(fam);
        const auto& p = doc.at(to_string(fam)).at("params");
        if (fam == ModelFamily::kGbdt) spec.gbdt = gbdt_params_from_json(p);
        else if (fam == ModelFamily::kSvr) spec.svr = svr_params_from_json(p);
        else spec.p_enter = p.at("p_enter").get<double>();
        state_.tuned[fam] = spec;
      }
      return;
    }
    const auto y = target(state_.train_s);
    const size_t k = cfg_.folds.value_or(default_fold_count(y.size()));
    std::vector<size_t> rows(y.size());
    std::iota(rows.begin(), rows.end(), size_t{0});
    const FoldPlan folds = make_folds(rows, k, mix_seed(seed_, 1));
    json tuned = json::object();
    for (ModelFamily fam : cfg_.models) {
      const ModelSpec base = base_spec(fam);
      const auto& grid = cfg_.families.at(fam).grid;
      const std::string name = to_string(fam);
      if (!grid) {
        state_.tuned[fam] = base;
        tuned[name] = {{"params", params_json(base)}, {"tuned", false}};
        continue;
      }
      const auto result = grid_search_cv(base, *grid, folds, features(state_.train_s, fam), y,
                                         input_names(fam), opt_.threads);
      state_.tuned[fam] = result.chosen_spec;
      put("tune/" + name + "_cv.csv", cv_to_csv(result));
      put_json("tune/" + name + "_cv.json", to_json(result));
      tuned[name] = {{"params", params_json(result.chosen_spec)}, {"tuned", true}, {"folds", k}};
    }
    put_json("tune/tuned.json", tuned);
  }

  void train() {
    if (loading_) {
      for (ModelFamily fam : cfg_.models)
        state_.models[fam] = TrainedModel::from_json(get_json("train/" + std::string(to_string(fam)) + ".json"));
      return;
    }
    const auto y = target(state_.train_s);
    for (ModelFamily fam : cfg_.models) {
      state_.models[fam] = train_model(state_.tuned.at(fam), features(state_.train_s, fam), y, input_names(fam));
      put_json("train/" + std::string(to_string(fam)) + ".json", state_.models[fam].to_json());
    }
  }

  std::vector<double> native_predictions(ModelFamily fam, const DataTable& scaled) const {
    auto pred = state_.models.at(fam).predict(features(scaled, fam));
    for (double& v : pred) v = std::clamp(v, cfg_.range_min, cfg_.range_max);
    return state_.transform.invert_target(pred);
  }

  void evaluate_stage() {
    if (loading_) return;
    std::ostringstream csv;
    csv << "model,split,n,rmse,cd,r\n";
    json all = json::array();
    std::vector<std::tuple<std::string, const DataTable*, const DataTable*>> splits{
        {"train", &state_.train, &state_.train_s}, {"test", &state_.test, &state_.test_s}};
    if (state_.has_independent && state_.independent.rows() > 0)
      splits.emplace_back("independent", &state_.independent, &state_.independent_s);
    for (ModelFamily fam : cfg_.models) {
      const std::string name = to_string(fam);
      for (const auto& [label, native, scaled] : splits) {
        const auto measured = target(*native);
        const auto estimated = native_predictions(fam, *scaled);
        const auto rep = evaluate(measured, estimated, label);
        csv << name << ',' << label << ',' << rep.n << ',' << stats::format_double(rep.rmse) << ','
            << (rep.cd ? stats::format_double(*rep.cd) : "") << ','
            << (rep.r ? stats::format_double(*rep.r) : "") << '\n';
        json j = to_json(rep);
        j["model"] = name;
        all.push_back(j);
        const std::string rel = "eval/scatter_" + name + "_" + label + ".csv";
        emit_scatter(measured, estimated, path(rel));
        artifacts_.push_back(rel);
        artifacts_.push_back(rel + ".meta.json");
      }
    }
    manifest_.evaluations = all;
    put("eval/metrics.csv", csv.str());
    put_json("eval/metrics.json", {{"units", "native target units"}, {"reports", all}});
  }

  void curve() {
    if (loading_) return;
    const auto ytr = target(state_.train_s);
    const auto yte = target(state_.test_s);
    for (ModelFamily fam : cfg_.curve_models) {
      if (!state_.tuned.count(fam)) continue;
      const auto lc = learning_curve(state_.tuned.at(fam), features(state_.train_s, fam), ytr,
                                     features(state_.test_s, fam), yte, input_names(fam),
                                     cfg_.curve_stride, opt_.threads);
      const std::string name = to_string(fam);
      put("curve/" + name + "_curve.csv", curve_to_csv(lc));
      put_json("curve/" + name + "_curve.json", to_json(lc));
    }
  }

  void explain() {
    if (loading_) return;
    std::vector<size_t> sample(std::min(cfg_.explain_samples, state_.test_s.rows()));
    std::iota(sample.begin(), sample.end(), size_t{0});
    for (ModelFamily fam : cfg_.models) {
      const std::string name = to_string(fam);
      const auto names = input_names(fam);
      const Matrix xtr = features(state_.train_s, fam);
      const Matrix xte = features(state_.test_s, fam).select_rows(sample);
      const auto& model = state_.models.at(fam);
      if (fam == ModelFamily::kMlr) {
        const auto summary = summarize(std::get<LinearModel>(model.model));
        put("explain/" + name + "_importance.csv", summary_to_csv(summary));
        put_json("explain/" + name + "_importance.json", to_json(summary));
        continue;
      }
      Attribution attr;
      if (fam == ModelFamily::kGbdt) {
        attr = tree_shap(std::get<TreeEnsemble>(model.model), xte, xtr);
        attr.background_label = "training split (all rows)";
      } else {
        std::vector<size_t> bg(std::min(cfg_.explain_background, xtr.rows()));
        std::iota(bg.begin(), bg.end(), size_t{0});
        KernelShapOptions ko;
        ko.n_coalitions = std::max(cfg_.n_coalitions, 2 * names.size());
        ko.seed = mix_seed(seed_, 3);
        attr = kernel_shap([&](const Matrix& m) { return model.predict(m); }, xtr.select_rows(bg), xte, ko);
        attr.background_label = "first " + std::to_string(bg.size()) + " rows of the shuffled training split";
      }
      const auto pred = model.predict(xte);
      double worst = 0.0;
      for (size_t r = 0; r < xte.rows(); ++r) {
        double total = attr.base_value;
        for (size_t j = 0; j < names.size(); ++j) total += attr.values(r, j);
        worst = std::max(worst, std::abs(total - pred[r]));
      }
      const auto summary = summarize(attr, xte, names);
      put("explain/" + name + "_shap.csv", attribution_to_csv(attr, names));
      put("explain/" + name + "_importance.csv", summary_to_csv(summary));
      json doc = to_json(summary);
      doc["attribution"] = to_json(attr, names);
      doc["local_accuracy_max_error"] = worst;
      put_json("explain/" + name + "_importance.json", doc);
    }
  }

  void audit_stage() {
    if (loading_) return;
    const auto columns = audit_columns(state_.train, state_.test);
    const auto vs_test = audit(state_.train, state_.test, columns, cfg_.alpha, "train", "test");
    put("audit/shift_test.csv", shift_to_csv(vs_test));
    json doc = {{"train_vs_test", to_json(vs_test)}};
    if (state_.has_independent && state_.independent.rows() > 0) {
      const auto vs_indep = audit(state_.train, state_.independent, columns, cfg_.alpha, "train", "independent");
      put("audit/shift_independent.csv", shift_to_csv(vs_indep));
      doc["train_vs_independent"] = to_json(vs_indep);
    }
    put_json("audit/shift.json", doc);
  }

  const RunConfig& cfg_;
  const RunOptions& opt_;
  RunManifest& manifest_;
  fs::path root_;
  uint64_t seed_ = 0;
  bool loading_ = false;
  State state_;
  std::vector<std::string> artifacts_;
};

}  // namespace

RunManifest run_pipeline(const RunConfig& config, const RunOptions& options) {
  require(static_cast<int>(options.from) <= static_cast<int>(options.to), ErrorKind::kConfig,
          "first stage comes after the last stage");
  const fs::path root = options.output_dir.value_or(config.output_dir);
  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec) fail(ErrorKind::kIo, "cannot create output directory \"" + root.string() + "\": " + ec.message());

  RunManifest manifest;
  manifest.root = root;
  manifest.seed = options.seed.value_or(config.seed);
  manifest.config_hash = fnv1a_hex(config.document.dump());
  if (options.from != Stage::kIngest) {
    const fs::path prior = root / "manifest.json";
    if (fs::exists(prior)) {
      try {
        const auto old = RunManifest::from_json(json::parse(read_text_file(prior)));
        for (const auto& s : old.stages)
          if (static_cast<int>(stage_from_string(s.name)) < static_cast<int>(options.from))
            manifest.stages.push_back(s);
        if (static_cast<int>(options.from) > static_cast<int>(Stage::kEval)) manifest.evaluations = old.evaluations;
      } catch (const json::exception&) {
        // Unreadable manifest: the stage list restarts here.
      }
    }
  }

  Runner runner(config, options, manifest, root);
  auto write_manifest = [&] { write_text_file(root / "manifest.json", manifest.to_json().dump(2) + "\n"); };
  for (Stage stage : all_stages()) {
    if (static_cast<int>(stage) > static_cast<int>(options.to)) break;
    const bool loading = static_cast<int>(stage) < static_cast<int>(options.from);
    const auto start = std::chrono::steady_clock::now();
    try {
      if (loading) runner.load(stage);
      else runner.run(stage);
    } catch (const Error& e) {
      manifest.status = "failed";
      manifest.failed_stage = to_string(stage);
      manifest.error = e.what();
      if (!loading) {
        StageRecord partial{to_string(stage), 0.0, runner.take_artifacts()};
        if (!partial.artifacts.empty()) manifest.stages.push_back(std::move(partial));
      }
      write_manifest();
      throw Error(e.kind(), std::string("stage ") + to_string(stage) +
                                (loading ? " (reloading outputs)" : "") + ": " + e.what());
    }
    if (!loading) {
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      manifest.stages.erase(std::remove_if(manifest.stages.begin(), manifest.stages.end(),
                                           [&](const StageRecord& r) { return r.name == to_string(stage); }),
                            manifest.stages.end());
      manifest.stages.push_back({to_string(stage), secs, runner.take_artifacts()});
    }
  }
  manifest.status = options.to == Stage::kAudit ? "complete" : "partial";
  write_manifest();
  return manifest;
}

}  // namespace rfforge
