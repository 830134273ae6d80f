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

#include "rf_forge/shift_audit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <sstream>

#include "rf_forge/stats.hpp"

namespace rfforge {

TTestResult welch_t_test(std::span<const double> a, std::span<const double> b) {
  require(a.size() >= 2 && b.size() >= 2, ErrorKind::kInsufficientData,
          "t-test needs at least two values per sample");
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  const double va = stats::variance(a) / na;
  const double vb = stats::variance(b) / nb;
  require(va + vb > 0.0, ErrorKind::kDegenerate, "t-test is undefined: both samples have zero variance");
  TTestResult r;
  r.t = (stats::mean(a) - stats::mean(b)) / std::sqrt(va + vb);
  r.dof = (va + vb) * (va + vb) / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
  r.p = stats::student_t_two_sided(r.t, r.dof);
  return r;
}

double ks_critical_coefficient(double alpha) {
  require(alpha > 0.0 && alpha < 1.0, ErrorKind::kArgument, "alpha must lie in (0, 1)");
  return std::sqrt(-0.5 * std::log(alpha / 2.0));
}

KsResult ks_two_sample(std::span<const double> a, std::span<const double> b, double alpha) {
  require(!a.empty() && !b.empty(), ErrorKind::kArgument, "ks test needs nonempty samples");
  std::vector<double> sa(a.begin(), a.end());
  std::vector<double> sb(b.begin(), b.end());
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  const long long na = static_cast<long long>(sa.size());
  const long long nb = static_cast<long long>(sb.size());
  long long i = 0, j = 0, widest = 0;
  while (i < na || j < nb) {
    double v;
    if (j >= nb || (i < na && sa[static_cast<size_t>(i)] <= sb[static_cast<size_t>(j)])) v = sa[static_cast<size_t>(i)];
    else v = sb[static_cast<size_t>(j)];
    while (i < na && sa[static_cast<size_t>(i)] == v) ++i;
    while (j < nb && sb[static_cast<size_t>(j)] == v) ++j;
    widest = std::max(widest, std::llabs(i * nb - j * na));
  }
  KsResult r;
  const double dna = static_cast<double>(na);
  const double dnb = static_cast<double>(nb);
  r.statistic = static_cast<double>(widest) / (dna * dnb);
  r.d_crit = ks_critical_coefficient(alpha) * std::sqrt((dna + dnb) / (dna * dnb));
  const double root = std::sqrt(dna * dnb / (dna + dnb));
  r.p = stats::kolmogorov_survival((root + 0.12 + 0.11 / root) * r.statistic);
  return r;
}

const char* to_string(ShiftVerdict verdict) {
  switch (verdict) {
    case ShiftVerdict::kCompatible: return "distribution-compatible";
    case ShiftVerdict::kIncompatible: return "distribution-incompatible";
    case ShiftVerdict::kInconclusive: return "inconclusive";
  }
  return "unknown";
}

std::vector<std::string> audit_columns(const DataTable& a, const DataTable& b) {
  std::vector<std::string> out;
  for (const auto& f : a.schema())
    if (f.role != Role::kExcluded && b.find_column(f.name)) out.push_back(f.name);
  return out;
}

ShiftReport audit(const DataTable& a, const DataTable& b, std::span<const std::string> columns,
                  double alpha, std::string label_a, std::string label_b) {
  require(alpha > 0.0 && alpha < 1.0, ErrorKind::kArgument, "alpha must lie in (0, 1)");
  ShiftReport report;
  report.alpha = alpha;
  report.label_a = std::move(label_a);
  report.label_b = std::move(label_b);
  bool inconclusive = false;
  bool all_pass = true;
  for (const auto& name : columns) {
    const auto ca = a.find_column(name);
    const auto cb = b.find_column(name);
    require(ca.has_value() && cb.has_value(), ErrorKind::kSchema,
            "audited column \"" + name + "\" is missing from one of the tables");
    ColumnShift col;
    col.column = name;
    const auto va = a.present_values(*ca);
    const auto vb = b.present_values(*cb);
    col.n_a = va.size();
    col.n_b = vb.size();
    try {
      col.t_test = welch_t_test(va, vb);
      col.same_mean = col.t_test->p > alpha;
    } catch (const Error& e) {
      col.error = std::string("t-test: ") + e.what();
    }
    try {
      col.ks = ks_two_sample(va, vb, alpha);
      col.same_distribution = col.ks->p > alpha;
    } catch (const Error& e) {
      col.error += (col.error.empty() ? "" : "; ") + std::string("ks: ") + e.what();
    }
    if (!col.error.empty()) inconclusive = true;
    if (!col.same_mean || !col.same_distribution) all_pass = false;
    report.columns.push_back(std::move(col));
  }
  report.verdict = inconclusive ? ShiftVerdict::kInconclusive
                                : (all_pass ? ShiftVerdict::kCompatible : ShiftVerdict::kIncompatible);
  return report;
}

std::string shift_to_csv(const ShiftReport& report) {
  std::ostringstream out;
  out << "sample_a,sample_b,column,test,n_a,n_b,statistic,p_value,d_crit,dof,alpha,pass,error\n";
  const std::string a = stats::format_double(report.alpha);
  for (const auto& c : report.columns) {
    const std::string err = c.error.empty() ? "" : "\"" + c.error + "\"";
    out << report.label_a << ',' << report.label_b << ',' << c.column << ",welch_t," << c.n_a << ','
        << c.n_b << ',';
    if (c.t_test)
      out << stats::format_double(c.t_test->t) << ',' << stats::format_double(c.t_test->p) << ",,"
          << stats::format_double(c.t_test->dof);
    else
      out << ",,,";
    out << ',' << a << ',' << (c.same_mean ? 1 : 0) << ',' << err << '\n';
    out << report.label_a << ',' << report.label_b << ',' << c.column << ",ks," << c.n_a << ','
        << c.n_b << ',';
    if (c.ks)
      out << stats::format_double(c.ks->statistic) << ',' << stats::format_double(c.ks->p) << ','
          << stats::format_double(c.ks->d_crit) << ',';
    else
      out << ",,,";
    out << ',' << a << ',' << (c.same_distribution ? 1 : 0) << ',' << err << '\n';
  }
  return out.str();
}

nlohmann::json to_json(const ShiftReport& report) {
  nlohmann::json cols = nlohmann::json::array();
  for (const auto& c : report.columns) {
    nlohmann::json t = nullptr, ks = nullptr;
    if (c.t_test) t = {{"t", c.t_test->t}, {"p", c.t_test->p}, {"dof", c.t_test->dof}};
    if (c.ks) ks = {{"statistic", c.ks->statistic}, {"d_crit", c.ks->d_crit}, {"p", c.ks->p}};
    cols.push_back({{"column", c.column},
                    {"n_a", c.n_a},
                    {"n_b", c.n_b},
                    {"t_test", t},
                    {"ks", ks},
                    {"same_mean", c.same_mean},
                    {"same_distribution", c.same_distribution},
                    {"error", c.error}});
  }
  return {{"sample_a", report.label_a},
          {"sample_b", report.label_b},
          {"alpha", report.alpha},
          {"t_test", "Welch unequal-variance two-sample test (unpaired; sample sizes differ)"},
          {"ks_p_value", "asymptotic Kolmogorov distribution"},
          {"verdict", to_string(report.verdict)},
          {"columns", cols}};
}

}  // namespace rfforge
