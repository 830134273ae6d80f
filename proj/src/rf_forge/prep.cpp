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

#include "rf_forge/prep.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "rf_forge/stats.hpp"

namespace rfforge {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::vector<size_t> non_excluded(const DataTable& table) {
  std::vector<size_t> out;
  for (size_t c = 0; c < table.cols(); ++c)
    if (table.schema()[c].role != Role::kExcluded) out.push_back(c);
  return out;
}

nlohmann::json number_or_null(double v) {
  return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json();
}

}  // namespace

DataTable drop_missing_target(const DataTable& table) {
  const size_t t = table.target_index();
  std::vector<size_t> keep;
  for (size_t r = 0; r < table.rows(); ++r)
    if (table.present(r, t)) keep.push_back(r);
  return table.select_rows(keep);
}

DataTable drop_incomplete_rows(const DataTable& table) {
  const auto cols = non_excluded(table);
  std::vector<size_t> keep;
  for (size_t r = 0; r < table.rows(); ++r)
    if (table.missing_in_row(r, cols) == 0) keep.push_back(r);
  return table.select_rows(keep);
}

CapResult cap_features(const DataTable& table, const CapPolicy& policy) {
  for (auto pct : {policy.lower_percentile, policy.upper_percentile})
    if (pct) require(*pct >= 0.0 && *pct <= 100.0, ErrorKind::kConfig,
                     "capping percentile outside [0, 100]");
  std::vector<size_t> cols = table.input_indices();
  if (policy.include_target) cols.push_back(table.target_index());

  std::vector<ResolvedBound> bounds;
  for (size_t c : cols) {
    const auto& f = table.schema()[c];
    std::vector<double> sorted = table.present_values(c);
    std::sort(sorted.begin(), sorted.end());
    auto resolve = [&](bool lower, double& value, std::string& source) {
      auto it = policy.overrides.find(f.name);
      const std::optional<double> over =
          it == policy.overrides.end() ? std::nullopt
                                       : (lower ? it->second.first : it->second.second);
      const std::optional<double> schema_bound = lower ? f.lower_bound : f.upper_bound;
      const std::optional<double> pct = lower ? policy.lower_percentile : policy.upper_percentile;
      if (over) {
        value = *over;
        source = "override";
      } else if (policy.use_schema_bounds && schema_bound) {
        value = *schema_bound;
        source = "schema";
      } else if (pct) {
        value = sorted.empty() ? (lower ? -kInf : kInf)
                               : stats::quantile_sorted(sorted, *pct / 100.0);
        source = "percentile";
      } else {
        fail(ErrorKind::kConfig, std::string("cannot resolve ") + (lower ? "lower" : "upper") +
                                     " capping bound for feature \"" + f.name + "\"");
      }
    };
    ResolvedBound b{f.name, -kInf, kInf, "", "", 0};
    resolve(true, b.lower, b.lower_source);
    resolve(false, b.upper, b.upper_source);
    require(b.lower <= b.upper, ErrorKind::kConfig,
            "capping bounds for \"" + f.name + "\" are inverted");
    bounds.push_back(std::move(b));
  }
  DataTable out = apply_bounds(table, bounds);
  // Per-feature removal counts (a row can be counted by several features).
  for (auto& b : bounds) {
    const size_t c = table.column_index(b.feature);
    for (size_t r = 0; r < table.rows(); ++r)
      if (table.present(r, c) && (table.value(r, c) < b.lower || table.value(r, c) > b.upper))
        ++b.rows_removed;
  }
  return {std::move(out), std::move(bounds)};
}

DataTable apply_bounds(const DataTable& table, std::span<const ResolvedBound> bounds) {
  std::vector<std::pair<size_t, const ResolvedBound*>> cols;
  for (const auto& b : bounds) cols.emplace_back(table.column_index(b.feature), &b);
  std::vector<size_t> keep;
  for (size_t r = 0; r < table.rows(); ++r) {
    bool inside = true;
    for (const auto& [c, b] : cols) {
      if (!table.present(r, c)) continue;
      const double v = table.value(r, c);
      if (v < b->lower || v > b->upper) {
        inside = false;
        break;
      }
    }
    if (inside) keep.push_back(r);
  }
  return table.select_rows(keep);
}

DataTable drop_sparse_rows(const DataTable& table, double max_missing_fraction) {
  const auto inputs = table.input_indices();
  if (inputs.empty()) return table;
  std::vector<size_t> keep;
  for (size_t r = 0; r < table.rows(); ++r) {
    const double frac = static_cast<double>(table.missing_in_row(r, inputs)) /
                        static_cast<double>(inputs.size());
    if (!(frac > max_missing_fraction)) keep.push_back(r);
  }
  return table.select_rows(keep);
}

std::vector<ImputeWindow> plan_windows(std::span<const uint8_t> missing, const ImputePlan& plan) {
  require(plan.base_window >= 1, ErrorKind::kArgument, "base_window must be at least 1");
  require(plan.max_missing_ratio > 0.0 && plan.max_missing_ratio < 1.0, ErrorKind::kArgument,
          "max_missing_ratio must lie in (0, 1)");
  const size_t n = missing.size();
  std::vector<size_t> prefix(n + 1, 0);
  for (size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + (missing[i] ? 1 : 0);
  auto ratio = [&](size_t b, size_t e) {
    return static_cast<double>(prefix[e] - prefix[b]) / static_cast<double>(e - b);
  };
  // A remainder shorter than one base window is absorbed by the current one.
  auto absorb_tail = [&](size_t end) {
    return (end < n && n - end < plan.base_window) ? n : end;
  };

  std::vector<ImputeWindow> windows;
  size_t start = 0;
  while (start < n) {
    size_t end = absorb_tail(std::min(start + plan.base_window, n));
    while (ratio(start, end) > plan.max_missing_ratio && end < n) end = absorb_tail(end + 1);
    ImputeWindow w{start, end, prefix[end] - prefix[start], std::nullopt, false};
    w.terminal_violation = ratio(start, end) > plan.max_missing_ratio;
    windows.push_back(w);
    start = end;
  }
  return windows;
}

double mode_smallest(std::vector<double> values) {
  require(!values.empty(), ErrorKind::kInsufficientData, "mode of an empty set");
  std::sort(values.begin(), values.end());
  double best = values[0];
  size_t best_count = 0;
  size_t i = 0;
  while (i < values.size()) {
    size_t j = i;
    while (j < values.size() && values[j] == values[i]) ++j;
    if (j - i > best_count) {  // strict: ties keep the smaller value
      best_count = j - i;
      best = values[i];
    }
    i = j;
  }
  return best;
}

ImputeResult windowed_mode_impute(const DataTable& table, const ImputePlan& plan) {
  const size_t key = plan.sort_key.empty() ? table.target_index()
                                           : table.column_index(plan.sort_key);
  require(table.missing_in_column(key) == 0, ErrorKind::kData,
          "sort key \"" + table.schema()[key].name + "\" has missing values");
  const size_t n = table.rows();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return table.value(a, key) < table.value(b, key);
  });

  ImputeResult result{table, {}};
  result.audit.plan = plan;
  for (size_t c = 0; c < table.cols(); ++c) {
    if (c == key || table.schema()[c].role == Role::kExcluded) continue;
    const std::string& name = table.schema()[c].name;
    FeatureImputeAudit feature{name, {}, 0};
    if (table.missing_in_column(c) == 0) {
      result.audit.features.push_back(std::move(feature));
      continue;
    }
    std::vector<uint8_t> missing(n);
    for (size_t i = 0; i < n; ++i) missing[i] = table.present(order[i], c) ? 0 : 1;
    feature.windows = plan_windows(missing, plan);
    for (size_t w = 0; w < feature.windows.size(); ++w) {
      auto& win = feature.windows[w];
      if (win.missing == 0) continue;
      std::vector<double> present;
      for (size_t i = win.begin; i < win.end; ++i)
        if (!missing[i]) present.push_back(table.value(order[i], c));
      require(!present.empty(), ErrorKind::kData,
              "feature \"" + name + "\": window " + std::to_string(w) + " (sorted rows " +
                  std::to_string(win.begin) + ".." + std::to_string(win.end) +
                  ") has no present values");
      win.mode = mode_smallest(std::move(present));
      for (size_t i = win.begin; i < win.end; ++i)
        if (missing[i]) {
          result.table.set_cell(order[i], c, *win.mode);
          ++feature.imputed;
        }
      if (win.terminal_violation)
        result.audit.warnings.push_back(
            "feature \"" + name + "\": terminal window " + std::to_string(w) +
            " reached the end of the table with missing ratio " +
            stats::format_double(static_cast<double>(win.missing) /
                                 static_cast<double>(win.end - win.begin)));
    }
    result.audit.features.push_back(std::move(feature));
  }
  return result;
}

double spearman_rho(std::span<const double> x, std::span<const double> y) {
  require(x.size() == y.size(), ErrorKind::kShape, "spearman_rho: length mismatch");
  std::vector<double> xs, ys;
  for (size_t i = 0; i < x.size(); ++i)
    if (std::isfinite(x[i]) && std::isfinite(y[i])) {
      xs.push_back(x[i]);
      ys.push_back(y[i]);
    }
  require(xs.size() >= 2, ErrorKind::kInsufficientData,
          "spearman_rho: fewer than 2 complete pairs");
  const auto rx = stats::average_ranks(xs);
  const auto ry = stats::average_ranks(ys);
  const double mx = stats::mean(rx), my = stats::mean(ry);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  require(sxx > 0.0 && syy > 0.0, ErrorKind::kDegenerate,
          "spearman_rho: zero rank variance, correlation undefined");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

ScreenReport screen_collinear(const DataTable& table, double threshold) {
  const auto inputs = table.input_indices();
  require(inputs.size() >= 2, ErrorKind::kArgument, "screen needs at least 2 input features");
  ScreenReport report;
  report.threshold = threshold;
  std::vector<std::vector<double>> cols;
  for (size_t c : inputs) {
    std::vector<double> v(table.rows());
    for (size_t r = 0; r < table.rows(); ++r)
      v[r] = table.present(r, c) ? table.value(r, c) : std::nan("");
    cols.push_back(std::move(v));
  }
  std::vector<bool> dropped(inputs.size(), false);
  for (size_t i = 0; i < inputs.size(); ++i) {
    for (size_t j = i + 1; j < inputs.size(); ++j) {
      ScreenPair pair{table.schema()[inputs[i]].name, table.schema()[inputs[j]].name,
                      std::nullopt, ""};
      try {
        pair.rho = spearman_rho(cols[i], cols[j]);
      } catch (const Error& e) {
        pair.error = e.what();
      }
      if (pair.rho && std::fabs(*pair.rho) >= threshold && !dropped[i] && !dropped[j]) {
        const size_t mi = table.missing_in_column(inputs[i]);
        const size_t mj = table.missing_in_column(inputs[j]);
        const size_t victim = mi > mj ? i : j;
        dropped[victim] = true;
        report.dropped.push_back(table.schema()[inputs[victim]].name);
      }
      report.pairs.push_back(std::move(pair));
    }
  }
  return report;
}

nlohmann::json to_json(const ImputeAudit& audit) {
  nlohmann::json features = nlohmann::json::array();
  for (const auto& f : audit.features) {
    nlohmann::json windows = nlohmann::json::array();
    for (const auto& w : f.windows)
      windows.push_back({{"begin", w.begin},
                         {"end", w.end},
                         {"missing", w.missing},
                         {"mode", w.mode ? nlohmann::json(*w.mode) : nlohmann::json()},
                         {"terminal_violation", w.terminal_violation}});
    features.push_back({{"feature", f.feature}, {"imputed", f.imputed}, {"windows", windows}});
  }
  return {{"base_window", audit.plan.base_window},
          {"max_missing_ratio", audit.plan.max_missing_ratio},
          {"features", features},
          {"warnings", audit.warnings}};
}

nlohmann::json to_json(const ScreenReport& report) {
  nlohmann::json pairs = nlohmann::json::array();
  for (const auto& p : report.pairs) {
    nlohmann::json entry = {{"a", p.a}, {"b", p.b}};
    entry["rho"] = p.rho ? nlohmann::json(*p.rho) : nlohmann::json();
    if (!p.error.empty()) entry["error"] = p.error;
    pairs.push_back(std::move(entry));
  }
  return {{"threshold", report.threshold}, {"pairs", pairs}, {"dropped", report.dropped}};
}

nlohmann::json to_json(std::span<const ResolvedBound> bounds) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& b : bounds)
    out.push_back({{"feature", b.feature},
                   {"lower", number_or_null(b.lower)},
                   {"upper", number_or_null(b.upper)},
                   {"lower_source", b.lower_source},
                   {"upper_source", b.upper_source},
                   {"rows_removed", b.rows_removed}});
  return out;
}

std::vector<ResolvedBound> bounds_from_json(const nlohmann::json& doc) {
  std::vector<ResolvedBound> out;
  for (const auto& e : doc) {
    ResolvedBound b;
    b.feature = e.at("feature").get<std::string>();
    b.lower = e.at("lower").is_null() ? -kInf : e.at("lower").get<double>();
    b.upper = e.at("upper").is_null() ? kInf : e.at("upper").get<double>();
    b.lower_source = e.value("lower_source", "");
    b.upper_source = e.value("upper_source", "");
    b.rows_removed = e.value("rows_removed", size_t{0});
    out.push_back(std::move(b));
  }
  return out;
}

}  // namespace rfforge
