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

#include "rf_forge/transform.hpp"

#include <algorithm>
#include <cinttypes>
#include <cstdio>

#include "rf_forge/stats.hpp"

namespace rfforge {

namespace {

constexpr int kFormatVersion = 1;

const char* to_string(TransformOrder order) {
  return order == TransformOrder::kGaussThenMinMax ? "gauss_then_minmax" : "minmax_only";
}

TransformOrder order_from_string(const std::string& s) {
  if (s == "gauss_then_minmax") return TransformOrder::kGaussThenMinMax;
  if (s == "minmax_only") return TransformOrder::kMinMaxOnly;
  fail(ErrorKind::kConfig, "unknown transform order \"" + s + "\"");
}

}  // namespace

void FittedTransform::derive(FeatureTransform& f) const {
  const auto& sorted = f.rank_table;
  const double n = static_cast<double>(sorted.size());
  f.unique_values.clear();
  f.unique_ranks.clear();
  f.unique_gauss.clear();
  size_t i = 0;
  while (i < sorted.size()) {
    size_t j = i;
    while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
    f.unique_values.push_back(sorted[i]);
    f.unique_ranks.push_back(0.5 * static_cast<double>(i + 1 + j));
    i = j;
  }
  require(f.unique_values.size() >= 2, ErrorKind::kDegenerate,
          "feature \"" + f.name + "\" is constant on the training data");
  for (double r : f.unique_ranks)
    f.unique_gauss.push_back(order_ == TransformOrder::kGaussThenMinMax
                                 ? stats::inverse_normal_cdf((r - 0.5) / n)
                                 : 0.0);
  if (order_ == TransformOrder::kMinMaxOnly) f.unique_gauss = f.unique_values;
  f.x_min = f.unique_gauss.front();
  f.x_max = f.unique_gauss.back();
}

FittedTransform FittedTransform::fit(const DataTable& table, double range_min, double range_max,
                                     TransformOrder order) {
  require(range_min < range_max, ErrorKind::kArgument, "transform range must satisfy min < max");
  FittedTransform t;
  t.range_min_ = range_min;
  t.range_max_ = range_max;
  t.order_ = order;
  for (size_t c = 0; c < table.cols(); ++c) {
    const auto& schema = table.schema()[c];
    if (schema.role == Role::kExcluded) continue;
    require(table.missing_in_column(c) == 0, ErrorKind::kData,
            "cannot fit transform: column \"" + schema.name + "\" has missing values");
    FeatureTransform f;
    f.name = schema.name;
    f.rank_table = table.column_values(c);
    std::sort(f.rank_table.begin(), f.rank_table.end());
    t.derive(f);
    if (schema.role == Role::kTarget) t.target_feature_ = t.features_.size();
    t.features_.push_back(std::move(f));
  }
  return t;
}

double FittedTransform::gauss_stage(size_t feature, double value) const {
  const auto& f = features_[feature];
  const auto& u = f.unique_values;
  if (value <= u.front()) return f.unique_gauss.front();
  if (value >= u.back()) return f.unique_gauss.back();
  const size_t j =
      static_cast<size_t>(std::upper_bound(u.begin(), u.end(), value) - u.begin()) - 1;
  if (value == u[j]) return f.unique_gauss[j];
  if (order_ == TransformOrder::kMinMaxOnly) return value;
  const double t = (value - u[j]) / (u[j + 1] - u[j]);
  const double rank = f.unique_ranks[j] + t * (f.unique_ranks[j + 1] - f.unique_ranks[j]);
  return stats::inverse_normal_cdf((rank - 0.5) / static_cast<double>(f.rank_table.size()));
}

double FittedTransform::apply_value(size_t feature, double value) const {
  const auto& f = features_[feature];
  const double g = gauss_stage(feature, value);
  const double norm = (g - f.x_min) / (f.x_max - f.x_min);
  return std::clamp(norm * (range_max_ - range_min_) + range_min_, range_min_, range_max_);
}

size_t FittedTransform::feature_index(std::string_view name) const {
  for (size_t i = 0; i < features_.size(); ++i)
    if (features_[i].name == name) return i;
  fail(ErrorKind::kSchema, "transform error: no fitted feature \"" + std::string(name) + "\"");
}

DataTable FittedTransform::apply(const DataTable& table) const {
  std::vector<size_t> cols;
  for (size_t c = 0; c < table.cols(); ++c)
    if (table.schema()[c].role != Role::kExcluded) cols.push_back(c);
  require(cols.size() == features_.size(), ErrorKind::kSchema,
          "transform error: table has " + std::to_string(cols.size()) +
              " modelled columns, transform was fitted on " + std::to_string(features_.size()));
  for (size_t i = 0; i < cols.size(); ++i)
    require(table.schema()[cols[i]].name == features_[i].name, ErrorKind::kSchema,
            "transform error: column \"" + table.schema()[cols[i]].name +
                "\" does not match fitted feature \"" + features_[i].name + "\"");
  DataTable out = table;
  for (size_t i = 0; i < cols.size(); ++i)
    for (size_t r = 0; r < table.rows(); ++r) {
      require(table.present(r, cols[i]), ErrorKind::kData,
              "transform error: missing value in \"" + features_[i].name + "\" at row " +
                  std::to_string(r + 1));
      out.set_cell(r, cols[i], apply_value(i, table.value(r, cols[i])));
    }
  return out;
}

double FittedTransform::invert_value(size_t feature, double scaled) const {
  require(scaled >= range_min_ && scaled <= range_max_, ErrorKind::kRange,
          "scaled value " + stats::format_double(scaled) + " lies outside [" +
              stats::format_double(range_min_) + ", " + stats::format_double(range_max_) + "]");
  const auto& f = features_[feature];
  const double z = f.x_min + (scaled - range_min_) / (range_max_ - range_min_) * (f.x_max - f.x_min);
  const auto& g = f.unique_gauss;
  const auto& u = f.unique_values;
  if (z <= g.front()) return u.front();
  if (z >= g.back()) return u.back();
  const size_t j = static_cast<size_t>(std::upper_bound(g.begin(), g.end(), z) - g.begin()) - 1;
  const double t = (z - g[j]) / (g[j + 1] - g[j]);
  return u[j] + t * (u[j + 1] - u[j]);
}

std::vector<double> FittedTransform::invert_target(std::span<const double> scaled) const {
  std::vector<double> out;
  out.reserve(scaled.size());
  for (double s : scaled) out.push_back(invert_value(target_feature_, s));
  return out;
}

nlohmann::json FittedTransform::to_json() const {
  nlohmann::json features = nlohmann::json::array();
  for (const auto& f : features_)
    features.push_back({{"name", f.name},
                        {"rank_table", f.rank_table},
                        {"x_min", f.x_min},
                        {"x_max", f.x_max}});
  return {{"format", "rf_forge.transform"},
          {"version", kFormatVersion},
          {"order", to_string(order_)},
          {"range", {range_min_, range_max_}},
          {"target", features_.empty() ? "" : features_[target_feature_].name},
          {"features", features}};
}

FittedTransform FittedTransform::from_json(const nlohmann::json& doc) {
  FittedTransform t;
  try {
    require(doc.at("format") == "rf_forge.transform", ErrorKind::kData,
            "not a transform document");
    require(doc.at("version").get<int>() == kFormatVersion, ErrorKind::kData,
            "unsupported transform version");
    t.order_ = order_from_string(doc.at("order").get<std::string>());
    t.range_min_ = doc.at("range").at(0).get<double>();
    t.range_max_ = doc.at("range").at(1).get<double>();
    const auto target = doc.at("target").get<std::string>();
    for (const auto& entry : doc.at("features")) {
      FeatureTransform f;
      f.name = entry.at("name").get<std::string>();
      f.rank_table = entry.at("rank_table").get<std::vector<double>>();
      require(std::is_sorted(f.rank_table.begin(), f.rank_table.end()), ErrorKind::kData,
              "rank table of \"" + f.name + "\" is not sorted");
      t.derive(f);
      if (f.name == target) t.target_feature_ = t.features_.size();
      t.features_.push_back(std::move(f));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kData, std::string("malformed transform document: ") + e.what());
  }
  return t;
}

std::string FittedTransform::fingerprint() const {
  const std::string text = to_json().dump();
  uint64_t hash = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    hash ^= ch;
    hash *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016" PRIx64, hash);
  return buf;
}

}  // namespace rfforge
