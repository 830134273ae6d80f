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

// rf_forge command line. Talks to the library only through the C interface.

#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "rf_forge/rf_forge.h"

namespace {

struct CommonFlags {
  std::string config;
  std::string out;
  std::optional<uint64_t> seed;
  int threads = 0;
};

int report(rf_status status) {
  if (status != RF_OK) std::fprintf(stderr, "rf_forge: %s: %s\n", rf_last_error_kind(), rf_last_error());
  return static_cast<int>(status);
}

void add_common(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--config", flags.config, "Run configuration (JSON)")->required();
  cmd->add_option("--out", flags.out, "Run directory (overrides the config)");
  cmd->add_option("--seed", flags.seed, "Seed (overrides the config)");
  cmd->add_option("--threads", flags.threads, "Worker threads (fallback: RF_FORGE_THREADS)");
}

int run_stages(const CommonFlags& flags, const char* from, const char* to) {
  unsigned threads = 0;
  if (rf_status st = rf_resolve_threads(flags.threads, &threads); st != RF_OK) return report(st);
  if (flags.threads < 0) {
    std::fprintf(stderr, "rf_forge: --threads must be >= 1\n");
    return RF_ERR_CONFIG;
  }
  rf_config* config = nullptr;
  if (rf_status st = rf_config_load(flags.config.c_str(), &config); st != RF_OK) {
    std::fprintf(stderr, "rf_forge: invalid configuration \"%s\":\n%s\n", flags.config.c_str(), rf_last_error());
    return st;
  }
  rf_run_options opt;
  rf_run_options_init(&opt);
  opt.from = from;
  opt.to = to;
  opt.threads = threads;
  if (flags.seed) {
    opt.has_seed = 1;
    opt.seed = *flags.seed;
  }
  if (!flags.out.empty()) opt.output_dir = flags.out.c_str();
  char* manifest = nullptr;
  const rf_status st = rf_run(config, &opt, &manifest);
  rf_config_free(config);
  if (st != RF_OK) return report(st);
  std::printf("%s\n", manifest);
  rf_string_free(manifest);
  return RF_OK;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"rf_forge: recovery-factor modelling workflow"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(rf_version()));

  CommonFlags flags;
  std::string resume;
  auto* run = app.add_subcommand("run", "Run the full workflow");
  add_common(run, flags);
  run->add_option("--resume", resume, "Restart at this stage, reloading earlier outputs");

  struct StageCommand {
    const char* name;
    const char* help;
    const char* from;
    const char* to;
  };
  const std::vector<StageCommand> stage_commands{
      {"prep", "Ingest, clean, split, impute, screen and transform", "ingest", "transform"},
      {"tune", "Cross-validated grid search", "tune", "tune"},
      {"train", "Train final models", "train", "train"},
      {"eval", "Score models on train, test and independent rows", "eval", "eval"},
      {"curve", "Learning curves", "curve", "curve"},
      {"explain", "Feature attributions", "explain", "explain"},
      {"audit", "Distribution-shift audit", "audit", "audit"},
  };
  std::vector<CLI::App*> stage_apps;
  for (const auto& sc : stage_commands) {
    auto* cmd = app.add_subcommand(sc.name, sc.help);
    add_common(cmd, flags);
    stage_apps.push_back(cmd);
  }

  std::string validate_path;
  auto* validate = app.add_subcommand("validate", "Check a configuration and list every problem");
  validate->add_option("--config", validate_path, "Run configuration (JSON)")->required();

  rf_synth_options synth_opt{nullptr, "oil", 1000, 0, nullptr, 0.0, nullptr};
  std::string spec_path, preset = "oil", shift, label, synth_out, schema_out;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic database");
  synth->add_option("--spec", spec_path, "Generator spec (JSON)");
  synth->add_option("--preset", preset, "Built-in generator")->check(CLI::IsMember({"oil"}));
  synth->add_option("--rows", synth_opt.rows, "Row count")->check(CLI::PositiveNumber);
  synth->add_option("--seed", synth_opt.seed, "Seed");
  synth->add_option("--shift", shift, "Comma-separated features to shift");
  synth->add_option("--shift-sd", synth_opt.shift_sd, "Shift size in reference standard deviations");
  synth->add_option("--label", label, "Provenance label");
  synth->add_option("--out", synth_out, "Output CSV")->required();
  synth->add_option("--schema-out", schema_out, "Also write the schema JSON here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : RF_ERR_CONFIG;
  }

  if (run->parsed()) {
    if (!resume.empty()) {
      const std::string names = std::string(",") + rf_stage_names() + ",";
      if (names.find("," + resume + ",") == std::string::npos) {
        std::fprintf(stderr, "rf_forge: unknown stage \"%s\"; stages: %s\n", resume.c_str(), rf_stage_names());
        return RF_ERR_CONFIG;
      }
    }
    return run_stages(flags, resume.empty() ? "ingest" : resume.c_str(), "audit");
  }
  for (size_t i = 0; i < stage_apps.size(); ++i)
    if (stage_apps[i]->parsed()) return run_stages(flags, stage_commands[i].from, stage_commands[i].to);

  if (validate->parsed()) {
    rf_config* config = nullptr;
    const rf_status st = rf_config_load(validate_path.c_str(), &config);
    if (st != RF_OK) {
      std::fprintf(stderr, "%s\n", rf_last_error());
      return st;
    }
    rf_config_free(config);
    std::printf("ok\n");
    return RF_OK;
  }

  if (synth->parsed()) {
    if (!spec_path.empty()) synth_opt.spec_path = spec_path.c_str();
    synth_opt.preset = preset.c_str();
    if (!shift.empty()) synth_opt.shift_columns = shift.c_str();
    if (!label.empty()) synth_opt.label = label.c_str();
    rf_table* table = nullptr;
    if (rf_status st = rf_synth(&synth_opt, &table); st != RF_OK) return report(st);
    rf_status st = rf_table_save_csv(table, synth_out.c_str());
    const size_t rows = rf_table_rows(table);
    rf_table_free(table);
    if (st != RF_OK) return report(st);
    if (!schema_out.empty()) {
      if (st = rf_synth_write_schema(&synth_opt, schema_out.c_str()); st != RF_OK) return report(st);
    }
    std::printf("wrote %zu rows to %s\n", rows, synth_out.c_str());
    return RF_OK;
  }
  return RF_ERR_CONFIG;
}
