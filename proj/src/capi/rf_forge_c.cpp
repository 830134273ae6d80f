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

#include "rf_forge/rf_forge.h"

#include <cmath>
#include <cstring>
#include <limits>
#include <new>
#include <sstream>
#include <string>

#include "rf_forge/dataset.hpp"
#include "rf_forge/pipeline.hpp"
#include "rf_forge/shift_audit.hpp"
#include "rf_forge/transform.hpp"
#include "rf_forge/tune_eval.hpp"

struct rf_table {
  rfforge::DataTable table;
};
struct rf_config {
  rfforge::RunConfig config;
};
struct rf_model {
  rfforge::TrainedModel model;
};
struct rf_transform {
  rfforge::FittedTransform transform;
};

namespace {

thread_local std::string g_error;
thread_local std::string g_kind;

rf_status status_for(rfforge::ErrorKind kind) {
  using rfforge::ErrorKind;
  switch (kind) {
    case ErrorKind::kArgument:
    case ErrorKind::kConfig:
      return RF_ERR_CONFIG;
    case ErrorKind::kConvergence:
      return RF_ERR_CONVERGENCE;
    case ErrorKind::kIo:
      return RF_ERR_IO;
    default:
      return RF_ERR_DATA;
  }
}

rf_status set_error(rf_status status, const std::string& kind, const std::string& message) {
  g_kind = kind;
  g_error = message;
  return status;
}

template <typename Fn>
rf_status guarded(Fn&& fn) {
  try {
    fn();
    return RF_OK;
  } catch (const rfforge::Error& e) {
    return set_error(status_for(e.kind()), rfforge::to_string(e.kind()), e.what());
  } catch (const nlohmann::json::exception& e) {
    return set_error(RF_ERR_DATA, "data error", std::string("malformed JSON document: ") + e.what());
  } catch (const std::bad_alloc&) {
    return set_error(RF_ERR_INTERNAL, "internal error", "out of memory");
  } catch (const std::exception& e) {
    return set_error(RF_ERR_INTERNAL, "internal error", e.what());
  }
}

rf_status null_arg(const char* name) {
  return set_error(RF_ERR_CONFIG, "argument error", std::string("null argument: ") + name);
}

char* dup_string(const std::string& s) {
  char* out = new char[s.size() + 1];
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

rfforge::SynthSpec synth_spec_for(const rf_synth_options& o) {
  rfforge::SynthSpec spec;
  if (o.spec_path != nullptr) {
    spec = rfforge::load_synth_spec(o.spec_path);
  } else {
    const std::string preset = o.preset != nullptr ? o.preset : "oil";
    if (preset != "oil") rfforge::fail(rfforge::ErrorKind::kArgument, "unknown synth preset \"" + preset + "\"");
    spec = rfforge::default_oil_synth_spec();
  }
  std::vector<std::string> cols;
  if (o.shift_columns != nullptr) {
    std::stringstream ss(o.shift_columns);
    std::string item;
    while (std::getline(ss, item, ','))
      if (!item.empty()) cols.push_back(item);
  }
  std::string label = o.label != nullptr ? o.label : spec.label;
  if (!cols.empty()) spec = rfforge::with_shift(std::move(spec), cols, o.shift_sd, label);
  else spec.label = label;
  return spec;
}

}  // namespace

extern "C" {

const char* rf_version(void) { return rfforge::kVersion; }
const char* rf_last_error(void) { return g_error.c_str(); }
const char* rf_last_error_kind(void) { return g_kind.c_str(); }
void rf_string_free(char* s) { delete[] s; }

rf_status rf_table_load_csv(const char* csv_path, const char* schema_path, rf_table** out) {
  if (csv_path == nullptr) return null_arg("csv_path");
  if (schema_path == nullptr) return null_arg("schema_path");
  if (out == nullptr) return null_arg("out");
  return guarded([&] {
    const auto schema = rfforge::load_schema(schema_path);
    *out = new rf_table{rfforge::load_csv(csv_path, schema)};
  });
}

rf_status rf_table_save_csv(const rf_table* table, const char* path) {
  if (table == nullptr) return null_arg("table");
  if (path == nullptr) return null_arg("path");
  return guarded([&] { rfforge::save_csv(table->table, path); });
}

size_t rf_table_rows(const rf_table* table) { return table != nullptr ? table->table.rows() : 0; }
size_t rf_table_cols(const rf_table* table) { return table != nullptr ? table->table.cols() : 0; }
size_t rf_table_missing(const rf_table* table) {
  return table != nullptr ? table->table.missing_total() : 0;
}
void rf_table_free(rf_table* table) { delete table; }

rf_status rf_synth(const rf_synth_options* options, rf_table** out) {
  if (options == nullptr) return null_arg("options");
  if (out == nullptr) return null_arg("out");
  return guarded([&] {
    const auto spec = synth_spec_for(*options);
    *out = new rf_table{rfforge::synth_generate(spec, options->rows, options->seed)};
  });
}

rf_status rf_synth_write_schema(const rf_synth_options* options, const char* path) {
  if (options == nullptr) return null_arg("options");
  if (path == nullptr) return null_arg("path");
  return guarded([&] { rfforge::save_schema(rfforge::synth_schema(synth_spec_for(*options)), path); });
}

rf_status rf_config_load(const char* path, rf_config** out) {
  if (path == nullptr) return null_arg("path");
  if (out == nullptr) return null_arg("out");
  return guarded([&] {
    auto result = rfforge::validate_config(path);
    if (!result.config) {
      std::string joined;
      for (const auto& e : result.errors) joined += (joined.empty() ? "" : "\n") + e;
      throw rfforge::Error(rfforge::ErrorKind::kConfig, joined);
    }
    *out = new rf_config{std::move(*result.config)};
  });
}

void rf_config_free(rf_config* config) { delete config; }

void rf_run_options_init(rf_run_options* options) {
  if (options == nullptr) return;
  *options = rf_run_options{nullptr, nullptr, 0, 0, nullptr, 0};
}

rf_status rf_run(const rf_config* config, const rf_run_options* options, char** manifest_json) {
  if (config == nullptr) return null_arg("config");
  return guarded([&] {
    rfforge::RunOptions opt;
    if (options != nullptr) {
      if (options->from != nullptr) opt.from = rfforge::stage_from_string(options->from);
      if (options->to != nullptr) opt.to = rfforge::stage_from_string(options->to);
      if (options->has_seed != 0) opt.seed = options->seed;
      if (options->output_dir != nullptr) opt.output_dir = std::filesystem::path(options->output_dir);
      opt.threads = options->threads;
    }
    if (opt.threads == 0) opt.threads = rfforge::resolve_threads(std::nullopt);
    const auto manifest = rfforge::run_pipeline(config->config, opt);
    if (manifest_json != nullptr) *manifest_json = dup_string(manifest.to_json().dump(2));
  });
}

const char* rf_stage_names(void) {
  static const std::string names = [] {
    std::string s;
    for (auto st : rfforge::all_stages()) s += (s.empty() ? "" : ",") + std::string(rfforge::to_string(st));
    return s;
  }();
  return names.c_str();
}

rf_status rf_resolve_threads(int flag, unsigned* out) {
  if (out == nullptr) return null_arg("out");
  return guarded([&] { *out = rfforge::resolve_threads(flag > 0 ? std::optional<int>(flag) : std::nullopt); });
}

rf_status rf_model_load(const char* json_path, rf_model** out) {
  if (json_path == nullptr) return null_arg("json_path");
  if (out == nullptr) return null_arg("out");
  return guarded([&] {
    const auto doc = nlohmann::json::parse(rfforge::read_text_file(json_path));
    *out = new rf_model{rfforge::TrainedModel::from_json(doc)};
  });
}

size_t rf_model_features(const rf_model* model) { return model != nullptr ? model->model.n_features() : 0; }

rf_status rf_model_predict(const rf_model* model, const double* x, size_t rows, size_t cols, double* out) {
  if (model == nullptr) return null_arg("model");
  if (rows > 0 && (x == nullptr || out == nullptr)) return null_arg("x/out");
  return guarded([&] {
    std::vector<double> values;
    if (rows * cols > 0) values.assign(x, x + rows * cols);
    const rfforge::Matrix m(rows, cols, std::move(values));
    const auto pred = model->model.predict(m);
    std::copy(pred.begin(), pred.end(), out);
  });
}

void rf_model_free(rf_model* model) { delete model; }

rf_status rf_transform_load(const char* json_path, rf_transform** out) {
  if (json_path == nullptr) return null_arg("json_path");
  if (out == nullptr) return null_arg("out");
  return guarded([&] {
    const auto doc = nlohmann::json::parse(rfforge::read_text_file(json_path));
    *out = new rf_transform{rfforge::FittedTransform::from_json(doc)};
  });
}

rf_status rf_transform_invert_target(const rf_transform* transform, const double* scaled, size_t n,
                                     double* out) {
  if (transform == nullptr) return null_arg("transform");
  if (n > 0 && (scaled == nullptr || out == nullptr)) return null_arg("scaled/out");
  return guarded([&] {
    const auto native = transform->transform.invert_target(std::span<const double>(scaled, n));
    std::copy(native.begin(), native.end(), out);
  });
}

void rf_transform_free(rf_transform* transform) { delete transform; }

rf_status rf_metrics(const double* measured, const double* estimated, size_t n, double* rmse, double* cd,
                     double* r) {
  if (n > 0 && (measured == nullptr || estimated == nullptr)) return null_arg("measured/estimated");
  return guarded([&] {
    const auto rep = rfforge::evaluate(std::span<const double>(measured, n), std::span<const double>(estimated, n), "");
    const double nan = std::numeric_limits<double>::quiet_NaN();
    if (rmse != nullptr) *rmse = rep.rmse;
    if (cd != nullptr) *cd = rep.cd.value_or(nan);
    if (r != nullptr) *r = rep.r.value_or(nan);
  });
}

rf_status rf_welch_t(const double* a, size_t na, const double* b, size_t nb, double* t, double* p,
                     double* dof) {
  if ((na > 0 && a == nullptr) || (nb > 0 && b == nullptr)) return null_arg("a/b");
  return guarded([&] {
    const auto res = rfforge::welch_t_test(std::span<const double>(a, na), std::span<const double>(b, nb));
    if (t != nullptr) *t = res.t;
    if (p != nullptr) *p = res.p;
    if (dof != nullptr) *dof = res.dof;
  });
}

rf_status rf_ks(const double* a, size_t na, const double* b, size_t nb, double alpha, double* statistic,
                double* p, double* d_crit) {
  if ((na > 0 && a == nullptr) || (nb > 0 && b == nullptr)) return null_arg("a/b");
  return guarded([&] {
    const auto res =
        rfforge::ks_two_sample(std::span<const double>(a, na), std::span<const double>(b, nb), alpha);
    if (statistic != nullptr) *statistic = res.statistic;
    if (p != nullptr) *p = res.p;
    if (d_crit != nullptr) *d_crit = res.d_crit;
  });
}

rf_status rf_emit_scatter(const double* measured, const double* estimated, size_t n, const char* path) {
  if (path == nullptr) return null_arg("path");
  if (n > 0 && (measured == nullptr || estimated == nullptr)) return null_arg("measured/estimated");
  return guarded([&] {
    rfforge::emit_scatter(std::span<const double>(measured, n), std::span<const double>(estimated, n), path);
  });
}

}  // extern "C"
