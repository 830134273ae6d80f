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

#include "rf_forge/tune_eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "rf_forge/stats.hpp"

namespace rfforge {

namespace {

void check_vectors(std::span<const double> measured, std::span<const double> estimated) {
  require(measured.size() == estimated.size(), ErrorKind::kShape,
          "measured and estimated vectors differ in length");
  require(!measured.empty(), ErrorKind::kArgument, "metrics need at least one value");
  for (size_t i = 0; i < measured.size(); ++i)
    require(std::isfinite(measured[i]) && std::isfinite(estimated[i]), ErrorKind::kData,
            "metric inputs must be finite");
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

std::string optional_field(const std::optional<double>& v) {
  return v ? stats::format_double(*v) : std::string();
}

nlohmann::json optional_json(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

std::string describe(const std::vector<std::pair<std::string, double>>& values) {
  std::string out;
  for (const auto& [name, value] : values) {
    if (!out.empty()) out += ';';
    out += name + "=" + stats::format_double(value);
  }
  return out;
}

const std::set<std::string>& integer_params() {
  static const std::set<std::string> names{"max_depth", "n_rounds", "early_stopping_rounds",
                                           "max_passes", "seed"};
  return names;
}

}  // namespace

double rmse(std::span<const double> measured, std::span<const double> estimated) {
  check_vectors(measured, estimated);
  double sum = 0.0;
  for (size_t i = 0; i < measured.size(); ++i)
    sum += (measured[i] - estimated[i]) * (measured[i] - estimated[i]);
  return std::sqrt(sum / static_cast<double>(measured.size()));
}

std::optional<double> pearson_r(std::span<const double> measured, std::span<const double> estimated) {
  check_vectors(measured, estimated);
  require(measured.size() >= 2, ErrorKind::kArgument, "pearson r needs at least two values");
  const double mm = stats::mean(measured);
  const double me = stats::mean(estimated);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (size_t i = 0; i < measured.size(); ++i) {
    const double dx = measured[i] - mm;
    const double dy = estimated[i] - me;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;
  const double denom = static_cast<double>(measured.size() - 1);
  const double r = (sxy / denom) / (std::sqrt(sxx / denom) * std::sqrt(syy / denom));
  return std::clamp(r, -1.0, 1.0);
}

double cd(std::span<const double> measured, std::span<const double> estimated) {
  check_vectors(measured, estimated);
  require(measured.size() >= 2, ErrorKind::kArgument, "cd needs at least two values");
  const double mm = stats::mean(measured);
  double ss_res = 0.0, ss_tot = 0.0;
  for (size_t i = 0; i < measured.size(); ++i) {
    ss_res += (measured[i] - estimated[i]) * (measured[i] - estimated[i]);
    ss_tot += (measured[i] - mm) * (measured[i] - mm);
  }
  require(ss_tot > 0.0, ErrorKind::kDegenerate, "cd is undefined for constant measured values");
  return 1.0 - ss_res / ss_tot;
}

EvalReport evaluate(std::span<const double> measured, std::span<const double> estimated,
                    std::string split) {
  check_vectors(measured, estimated);
  EvalReport rep;
  rep.split = std::move(split);
  rep.n = measured.size();
  rep.rmse = rmse(measured, estimated);
  const double mm = stats::mean(measured);
  const double me = stats::mean(estimated);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (size_t i = 0; i < measured.size(); ++i) {
    rep.ss_res += (measured[i] - estimated[i]) * (measured[i] - estimated[i]);
    rep.ss_tot += (measured[i] - mm) * (measured[i] - mm);
    sxy += (measured[i] - mm) * (estimated[i] - me);
    sxx += (measured[i] - mm) * (measured[i] - mm);
    syy += (estimated[i] - me) * (estimated[i] - me);
  }
  if (rep.n >= 2) {
    const double denom = static_cast<double>(rep.n - 1);
    rep.cov = sxy / denom;
    rep.sd_measured = std::sqrt(sxx / denom);
    rep.sd_estimated = std::sqrt(syy / denom);
    if (rep.ss_tot > 0.0) rep.cd = 1.0 - rep.ss_res / rep.ss_tot;
    rep.r = pearson_r(measured, estimated);
  }
  return rep;
}

nlohmann::json to_json(const EvalReport& r) {
  return {{"split", r.split},       {"n", r.n},
          {"rmse", r.rmse},         {"cd", optional_json(r.cd)},
          {"r", optional_json(r.r)}, {"ss_res", r.ss_res},
          {"ss_tot", r.ss_tot},     {"cov", r.cov},
          {"sd_measured", r.sd_measured}, {"sd_estimated", r.sd_estimated}};
}

const char* to_string(ModelFamily family) {
  switch (family) {
    case ModelFamily::kGbdt: return "gbdt";
    case ModelFamily::kSvr: return "svr";
    case ModelFamily::kMlr: return "mlr";
  }
  return "unknown";
}

ModelFamily family_from_string(const std::string& name) {
  if (name == "gbdt") return ModelFamily::kGbdt;
  if (name == "svr") return ModelFamily::kSvr;
  if (name == "mlr") return ModelFamily::kMlr;
  fail(ErrorKind::kConfig, "unknown model family \"" + name + "\"");
}

ModelSpec with_param(ModelSpec spec, const std::string& name, double value) {
  nlohmann::json v = value;
  if (integer_params().count(name)) {
    require(std::floor(value) == value, ErrorKind::kConfig,
            "parameter \"" + name + "\" needs an integer value");
    v = static_cast<long long>(value);
  }
  switch (spec.family) {
    case ModelFamily::kGbdt:
      spec.gbdt = gbdt_params_from_json({{name, v}}, spec.gbdt);
      break;
    case ModelFamily::kSvr:
      require(name != "kernel", ErrorKind::kConfig, "the kernel cannot be a numeric grid axis");
      spec.svr = svr_params_from_json({{name, v}}, spec.svr);
      break;
    case ModelFamily::kMlr:
      require(name == "p_enter", ErrorKind::kConfig, "unknown mlr parameter \"" + name + "\"");
      spec.p_enter = value;
      break;
  }
  return spec;
}

nlohmann::json params_json(const ModelSpec& spec) {
  switch (spec.family) {
    case ModelFamily::kGbdt: return to_json(spec.gbdt);
    case ModelFamily::kSvr: return to_json(spec.svr);
    case ModelFamily::kMlr: return {{"p_enter", spec.p_enter}};
  }
  return nullptr;
}

std::vector<double> TrainedModel::predict(const Matrix& x) const {
  return std::visit([&](const auto& m) { return m.predict(x); }, model);
}

size_t TrainedModel::n_features() const {
  switch (family) {
    case ModelFamily::kGbdt: return std::get<TreeEnsemble>(model).n_features;
    case ModelFamily::kSvr: return std::get<SvrModel>(model).n_features;
    case ModelFamily::kMlr: return std::get<LinearModel>(model).feature_names.size();
  }
  return 0;
}

nlohmann::json TrainedModel::to_json() const {
  return {{"family", to_string(family)},
          {"model", std::visit([](const auto& m) { return m.to_json(); }, model)}};
}

TrainedModel TrainedModel::from_json(const nlohmann::json& doc) {
  TrainedModel out;
  try {
    out.family = family_from_string(doc.at("family").get<std::string>());
    const auto& m = doc.at("model");
    switch (out.family) {
      case ModelFamily::kGbdt: out.model = TreeEnsemble::from_json(m); break;
      case ModelFamily::kSvr: out.model = SvrModel::from_json(m); break;
      case ModelFamily::kMlr: out.model = LinearModel::from_json(m); break;
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kData, std::string("malformed model document: ") + e.what());
  }
  return out;
}

TrainedModel train_model(const ModelSpec& spec, const Matrix& x, std::span<const double> y,
                         std::span<const std::string> names) {
  TrainedModel out;
  out.family = spec.family;
  switch (spec.family) {
    case ModelFamily::kGbdt: out.model = train_gbdt(x, y, spec.gbdt); break;
    case ModelFamily::kSvr: out.model = train_svr(x, y, spec.svr); break;
    case ModelFamily::kMlr: {
      std::vector<std::string> labels(names.begin(), names.end());
      if (labels.empty())
        for (size_t j = 0; j < x.cols(); ++j) labels.push_back("x" + std::to_string(j));
      out.model = forward_stepwise(x, y, labels, spec.p_enter);
      break;
    }
  }
  return out;
}

GridSpec default_gbdt_grid() {
  GridSpec g;
  g.axes = {{"max_depth", {3, 4, 5, 6}},
            {"min_child_weight", {1, 3, 6}},
            {"learning_rate", {0.05, 0.1, 0.3}},
            {"subsample", {0.8, 0.9, 1.0}},
            {"colsample_bytree", {0.8, 1.0}},
            {"alpha", {0.0, 0.3, 0.8}},
            {"lambda", {0.04, 0.08, 1.0}},
            {"colsample_bylevel", {0.9, 1.0}},
            {"gamma", {0.0, 0.01}},
            {"max_delta_step", {0.0, 0.1}}};
  g.stages = {{"max_depth", "min_child_weight"},
              {"learning_rate", "subsample"},
              {"colsample_bytree", "alpha"},
              {"lambda", "colsample_bylevel"},
              {"gamma", "max_delta_step"}};
  return g;
}

GridSpec default_svr_grid() {
  GridSpec g;
  g.axes = {{"c", {0.1, 1, 10, 100}}, {"epsilon", {0.01, 0.1, 0.5}}, {"gamma", {0.01, 0.1, 1, 10}}};
  return g;
}

void validate(const GridSpec& grid, ModelFamily family) {
  require(!grid.axes.empty(), ErrorKind::kConfig, "grid has no axes");
  std::set<std::string> names;
  ModelSpec probe;
  probe.family = family;
  for (const auto& axis : grid.axes) {
    require(names.insert(axis.name).second, ErrorKind::kConfig,
            "grid axis \"" + axis.name + "\" appears twice");
    require(!axis.values.empty(), ErrorKind::kConfig, "grid axis \"" + axis.name + "\" is empty");
    for (double v : axis.values) (void)with_param(probe, axis.name, v);
  }
  std::set<std::string> staged;
  for (const auto& stage : grid.stages) {
    require(!stage.empty(), ErrorKind::kConfig, "grid stage is empty");
    for (const auto& name : stage) {
      require(names.count(name) == 1, ErrorKind::kConfig,
              "grid stage names unknown axis \"" + name + "\"");
      require(staged.insert(name).second, ErrorKind::kConfig,
              "grid axis \"" + name + "\" appears in two stages");
    }
  }
  require(grid.stages.empty() || staged.size() == names.size(), ErrorKind::kConfig,
          "every grid axis must belong to a stage");
}

void parallel_for(size_t count, unsigned threads, const std::function<void(size_t)>& fn) {
  const size_t workers = std::min<size_t>(std::max(1u, threads), count);
  if (workers <= 1) {
    for (size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (size_t w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (size_t i = next++; i < count; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

size_t default_fold_count(size_t train_rows) { return train_rows < 2000 ? 3 : 10; }

CvResult grid_search_cv(const ModelSpec& base, const GridSpec& grid, const FoldPlan& folds,
                        const Matrix& x, std::span<const double> y,
                        std::span<const std::string> names, unsigned threads) {
  validate(grid, base.family);
  require(folds.k >= 2, ErrorKind::kArgument, "cross validation needs k >= 2");
  require(y.size() == x.rows(), ErrorKind::kShape, "target length does not match row count");
  for (size_t r : folds.rows)
    require(r < x.rows(), ErrorKind::kShape, "fold plan references a row beyond the matrix");

  struct FoldData {
    Matrix x_fit, x_val;
    std::vector<double> y_fit, y_val;
  };
  std::vector<FoldData> data(folds.k);
  for (size_t f = 0; f < folds.k; ++f) {
    const auto fit_rows = folds.rows_outside(f);
    const auto val_rows = folds.rows_in(f);
    data[f].x_fit = x.select_rows(fit_rows);
    data[f].x_val = x.select_rows(val_rows);
    data[f].y_fit = gather<double>(y, fit_rows);
    data[f].y_val = gather<double>(y, val_rows);
  }

  std::vector<std::vector<std::string>> stages = grid.stages;
  if (stages.empty()) {
    stages.emplace_back();
    for (const auto& axis : grid.axes) stages.back().push_back(axis.name);
  }
  auto axis_of = [&](const std::string& name) -> const GridAxis& {
    for (const auto& a : grid.axes)
      if (a.name == name) return a;
    fail(ErrorKind::kConfig, "unknown grid axis \"" + name + "\"");
  };

  CvResult result;
  result.k = folds.k;
  ModelSpec current = base;
  for (size_t s = 0; s < stages.size(); ++s) {
    std::vector<const GridAxis*> axes;
    size_t combos = 1;
    for (const auto& name : stages[s]) {
      axes.push_back(&axis_of(name));
      combos *= axes.back()->values.size();
    }
    std::vector<CvCell> cells(combos);
    for (size_t c = 0; c < combos; ++c) {
      size_t rem = c;
      std::vector<std::pair<std::string, double>> values(axes.size());
      for (size_t a = axes.size(); a-- > 0;) {
        const size_t len = axes[a]->values.size();
        values[a] = {axes[a]->name, axes[a]->values[rem % len]};
        rem /= len;
      }
      cells[c].stage = s;
      cells[c].values = std::move(values);
    }

    parallel_for(combos, threads, [&](size_t c) {
      auto& cell = cells[c];
      try {
        ModelSpec spec = current;
        for (const auto& [name, value] : cell.values) spec = with_param(spec, name, value);
        for (size_t f = 0; f < folds.k; ++f) {
          const auto model = train_model(spec, data[f].x_fit, data[f].y_fit, names);
          cell.fold_rmse.push_back(rmse(data[f].y_val, model.predict(data[f].x_val)));
        }
        cell.mean_rmse = stats::mean(cell.fold_rmse);
        cell.sd_rmse = std::sqrt(stats::variance(cell.fold_rmse));
      } catch (const Error& e) {
        cell.failed = true;
        cell.error = e.what();
        cell.fold_rmse.clear();
      }
    });

    std::optional<size_t> winner;
    for (size_t c = 0; c < combos; ++c)
      if (!cells[c].failed && (!winner || cells[c].mean_rmse < cells[*winner].mean_rmse)) winner = c;
    if (!winner) {
      std::string detail = cells.empty() ? std::string() : cells.front().error;
      fail(ErrorKind::kTuning, "every grid cell failed in stage " + std::to_string(s + 1) +
                                   (detail.empty() ? "" : ": " + detail));
    }
    for (const auto& [name, value] : cells[*winner].values) {
      current = with_param(current, name, value);
      result.chosen.emplace_back(name, value);
    }
    result.stage_winners.push_back(result.cells.size() + *winner);
    for (auto& cell : cells) result.cells.push_back(std::move(cell));
  }
  result.chosen_spec = current;
  return result;
}

std::string cv_to_csv(const CvResult& result) {
  std::ostringstream out;
  out << "stage,cell,params,mean_rmse,sd_rmse,folds,failed,chosen,error\n";
  for (size_t i = 0; i < result.cells.size(); ++i) {
    const auto& c = result.cells[i];
    const bool chosen =
        std::find(result.stage_winners.begin(), result.stage_winners.end(), i) != result.stage_winners.end();
    out << c.stage + 1 << ',' << i << ',' << csv_field(describe(c.values)) << ','
        << (c.failed ? std::string() : stats::format_double(c.mean_rmse)) << ','
        << (c.failed ? std::string() : stats::format_double(c.sd_rmse)) << ',' << c.fold_rmse.size()
        << ',' << (c.failed ? 1 : 0) << ',' << (chosen ? 1 : 0) << ',' << csv_field(c.error) << '\n';
  }
  return out.str();
}

nlohmann::json to_json(const CvResult& result) {
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& c : result.cells) {
    nlohmann::json values = nlohmann::json::object();
    for (const auto& [name, value] : c.values) values[name] = value;
    cells.push_back({{"stage", c.stage + 1},
                     {"values", values},
                     {"fold_rmse", c.fold_rmse},
                     {"mean_rmse", c.failed ? nlohmann::json(nullptr) : nlohmann::json(c.mean_rmse)},
                     {"sd_rmse", c.failed ? nlohmann::json(nullptr) : nlohmann::json(c.sd_rmse)},
                     {"failed", c.failed},
                     {"error", c.error}});
  }
  nlohmann::json chosen = nlohmann::json::object();
  for (const auto& [name, value] : result.chosen) chosen[name] = value;
  return {{"k", result.k},
          {"family", to_string(result.chosen_spec.family)},
          {"chosen", chosen},
          {"chosen_params", params_json(result.chosen_spec)},
          {"stage_winners", result.stage_winners},
          {"cells", cells}};
}

std::vector<size_t> curve_sizes(size_t n_train, size_t stride) {
  require(stride >= 1, ErrorKind::kArgument, "learning-curve stride must be >= 1");
  std::vector<size_t> sizes;
  for (size_t s = 1; s < n_train; s += stride) sizes.push_back(s);
  if (n_train > 0) sizes.push_back(n_train);
  return sizes;
}

LearningCurve learning_curve(const ModelSpec& spec, const Matrix& x_train,
                             std::span<const double> y_train, const Matrix& x_test,
                             std::span<const double> y_test, std::span<const std::string> names,
                             size_t stride, unsigned threads) {
  require(y_train.size() == x_train.rows() && y_test.size() == x_test.rows(), ErrorKind::kShape,
          "learning-curve target length does not match row count");
  require(!y_train.empty(), ErrorKind::kArgument, "learning curve needs training rows");
  LearningCurve curve;
  curve.stride = stride;
  const auto sizes = curve_sizes(x_train.rows(), stride);
  curve.points.resize(sizes.size());
  parallel_for(sizes.size(), threads, [&](size_t p) {
    auto& pt = curve.points[p];
    pt.size = sizes[p];
    std::vector<size_t> prefix(pt.size);
    for (size_t i = 0; i < pt.size; ++i) prefix[i] = i;
    try {
      // A linear fit needs more rows than candidate features.
      require(spec.family != ModelFamily::kMlr || pt.size > x_train.cols(), ErrorKind::kInsufficientData,
              "prefix of " + std::to_string(pt.size) + " rows cannot fit " + std::to_string(x_train.cols()) +
                  " linear features");
      const Matrix xs = x_train.select_rows(prefix);
      const std::span<const double> ys = y_train.subspan(0, pt.size);
      const auto model = train_model(spec, xs, ys, names);
      pt.train_rmse = rmse(ys, model.predict(xs));
      const size_t nt = std::min(pt.size, x_test.rows());
      if (nt > 0) {
        prefix.resize(nt);
        pt.test_rmse = rmse(y_test.subspan(0, nt), model.predict(x_test.select_rows(prefix)));
        pt.full_test_rmse = rmse(y_test, model.predict(x_test));
      }
    } catch (const Error& e) {
      pt.train_rmse.reset();
      pt.test_rmse.reset();
      pt.full_test_rmse.reset();
      pt.error = e.what();
    }
  });
  return curve;
}

std::string curve_to_csv(const LearningCurve& curve) {
  std::ostringstream out;
  out << "size,train_rmse,test_rmse,full_test_rmse,error\n";
  for (const auto& p : curve.points)
    out << p.size << ',' << optional_field(p.train_rmse) << ',' << optional_field(p.test_rmse) << ','
        << optional_field(p.full_test_rmse) << ',' << csv_field(p.error) << '\n';
  return out.str();
}

nlohmann::json to_json(const LearningCurve& curve) {
  nlohmann::json points = nlohmann::json::array();
  for (const auto& p : curve.points)
    points.push_back({{"size", p.size},
                      {"train_rmse", optional_json(p.train_rmse)},
                      {"test_rmse", optional_json(p.test_rmse)},
                      {"full_test_rmse", optional_json(p.full_test_rmse)},
                      {"error", p.error}});
  return {{"stride", curve.stride},
          {"full_test_rmse_note", "extension column: RMSE over the whole test split"},
          {"points", points}};
}

}  // namespace rfforge
