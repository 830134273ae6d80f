/* Copyright 2026 The rf_forge Authors. All Rights Reserved.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *     http://www.apache.org/licenses/LICENSE-2.0
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

/* C interface to rf_forge. Every call returns an rf_status; on failure the
 * message is available from rf_last_error() on the calling thread until the
 * next failing call. Handles are opaque and owned by the caller. Strings
 * returned through char** must be released with rf_string_free. */

#ifndef RF_FORGE_RF_FORGE_H_
#define RF_FORGE_RF_FORGE_H_

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define RF_API __declspec(dllexport)
#else
#define RF_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Values double as CLI exit codes. */
typedef enum rf_status {
  RF_OK = 0,
  RF_ERR_INTERNAL = 1,
  RF_ERR_CONFIG = 2,      /* bad arguments, configuration or parameters */
  RF_ERR_DATA = 3,        /* schema, parse, shape, numeric or tuning failures */
  RF_ERR_CONVERGENCE = 4, /* solver ran out of iterations */
  RF_ERR_IO = 5
} rf_status;

typedef struct rf_table rf_table;
typedef struct rf_config rf_config;
typedef struct rf_model rf_model;
typedef struct rf_transform rf_transform;

RF_API const char* rf_version(void);
RF_API const char* rf_last_error(void);
/* Category of the last error, e.g. "singular design". */
RF_API const char* rf_last_error_kind(void);
RF_API void rf_string_free(char* s);

/* ---- tables ---------------------------------------------------------- */

RF_API rf_status rf_table_load_csv(const char* csv_path, const char* schema_path, rf_table** out);
RF_API rf_status rf_table_save_csv(const rf_table* table, const char* path);
RF_API size_t rf_table_rows(const rf_table* table);
RF_API size_t rf_table_cols(const rf_table* table);
RF_API size_t rf_table_missing(const rf_table* table);
RF_API void rf_table_free(rf_table* table);

/* ---- synthetic databases --------------------------------------------- */

typedef struct rf_synth_options {
  const char* spec_path;     /* JSON generator spec; NULL selects the preset */
  const char* preset;        /* "oil" when spec_path is NULL */
  size_t rows;
  uint64_t seed;
  const char* shift_columns; /* comma-separated feature names, or NULL */
  double shift_sd;           /* shift in reference standard deviations */
  const char* label;         /* provenance label, or NULL */
} rf_synth_options;

RF_API rf_status rf_synth(const rf_synth_options* options, rf_table** out);
/* Writes the generator's schema JSON. */
RF_API rf_status rf_synth_write_schema(const rf_synth_options* options, const char* path);

/* ---- configuration and pipeline -------------------------------------- */

/* On validation failure returns RF_ERR_CONFIG and rf_last_error() lists every
 * violation, one per line. */
RF_API rf_status rf_config_load(const char* path, rf_config** out);
RF_API void rf_config_free(rf_config* config);

typedef struct rf_run_options {
  const char* from;       /* first stage to execute; NULL = "ingest" */
  const char* to;         /* last stage to execute; NULL = "audit" */
  int has_seed;
  uint64_t seed;          /* overrides the config seed when has_seed != 0 */
  const char* output_dir; /* NULL = config output directory */
  unsigned threads;       /* 0 = resolve from RF_FORGE_THREADS */
} rf_run_options;

RF_API void rf_run_options_init(rf_run_options* options);
/* Runs the stage range. The manifest JSON is returned through manifest_json
 * when non-NULL. Stages before `from` are reloaded from the run directory. */
RF_API rf_status rf_run(const rf_config* config, const rf_run_options* options,
                        char** manifest_json);
/* Comma-separated stage names in execution order. */
RF_API const char* rf_stage_names(void);
/* flag <= 0 means unset. */
RF_API rf_status rf_resolve_threads(int flag, unsigned* out);

/* ---- models and transforms ------------------------------------------- */

RF_API rf_status rf_model_load(const char* json_path, rf_model** out);
RF_API size_t rf_model_features(const rf_model* model);
/* x is row-major rows x cols; out receives rows predictions (scaled units). */
RF_API rf_status rf_model_predict(const rf_model* model, const double* x, size_t rows, size_t cols,
                                  double* out);
RF_API void rf_model_free(rf_model* model);

RF_API rf_status rf_transform_load(const char* json_path, rf_transform** out);
RF_API rf_status rf_transform_invert_target(const rf_transform* transform, const double* scaled,
                                            size_t n, double* out);
RF_API void rf_transform_free(rf_transform* transform);

/* ---- metrics and tests ----------------------------------------------- */

/* cd and r are NaN when undefined (constant measured or estimated values). */
RF_API rf_status rf_metrics(const double* measured, const double* estimated, size_t n, double* rmse,
                            double* cd, double* r);
RF_API rf_status rf_welch_t(const double* a, size_t na, const double* b, size_t nb, double* t,
                            double* p, double* dof);
RF_API rf_status rf_ks(const double* a, size_t na, const double* b, size_t nb, double alpha,
                       double* statistic, double* p, double* d_crit);

/* Two-column measured/estimated CSV plus <path>.meta.json. */
RF_API rf_status rf_emit_scatter(const double* measured, const double* estimated, size_t n,
                                 const char* path);

#ifdef __cplusplus
}
#endif

#endif /* RF_FORGE_RF_FORGE_H_ */
