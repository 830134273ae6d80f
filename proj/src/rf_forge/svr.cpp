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

#include "rf_forge/svr.hpp"

#include <algorithm>
#include <cmath>
#include <list>
#include <string>

#include "rf_forge/stats.hpp"

namespace rfforge {

namespace {

constexpr int kFormatVersion = 1;
constexpr double kTau = 1e-12;

// Least-recently-used cache of kernel matrix rows.
class KernelCache {
 public:
  KernelCache(const Matrix& x, const SvrParams& params)
      : x_(x), params_(params), rows_(x.rows()), where_(x.rows()) {
    const double row_bytes = static_cast<double>(x.rows()) * sizeof(double);
    const double budget = params.cache_mb * 1024.0 * 1024.0;
    capacity_ = std::max<size_t>(2, static_cast<size_t>(budget / std::max(row_bytes, 1.0)));
  }

  const std::vector<double>& row(size_t i) {
    if (!rows_[i].empty()) {
      lru_.erase(where_[i]);
      lru_.push_front(i);
      where_[i] = lru_.begin();
      return rows_[i];
    }
    if (lru_.size() >= capacity_) {
      const size_t victim = lru_.back();
      lru_.pop_back();
      std::vector<double>().swap(rows_[victim]);
    }
    auto& r = rows_[i];
    r.resize(x_.rows());
    const auto xi = x_.row(i);
    for (size_t k = 0; k < x_.rows(); ++k) r[k] = kernel_value(params_, xi, x_.row(k));
    lru_.push_front(i);
    where_[i] = lru_.begin();
    return r;
  }

 private:
  const Matrix& x_;
  const SvrParams& params_;
  std::vector<std::vector<double>> rows_;
  std::vector<std::list<size_t>::iterator> where_;
  std::list<size_t> lru_;
  size_t capacity_ = 2;
};

const char* to_string(KernelKind kind) { return kind == KernelKind::kRbf ? "rbf" : "linear"; }

KernelKind kernel_from_string(const std::string& s) {
  if (s == "rbf") return KernelKind::kRbf;
  if (s == "linear") return KernelKind::kLinear;
  fail(ErrorKind::kConfig, "unknown kernel \"" + s + "\"");
}

}  // namespace

SvrParams oil_svr_params() {
  SvrParams p;
  p.c = 10.0;
  p.epsilon = 0.1;
  p.gamma = 1.0;
  return p;
}

SvrParams gas_svr_params() {
  SvrParams p;
  p.c = 100.0;
  p.epsilon = 0.01;
  p.gamma = 1.0;
  return p;
}

void validate(const SvrParams& p) {
  auto check = [](bool ok, const std::string& what) {
    require(ok, ErrorKind::kArgument, "invalid svr parameter: " + what);
  };
  check(p.c > 0.0 && std::isfinite(p.c), "c must be > 0");
  check(p.epsilon >= 0.0, "epsilon must be >= 0");
  check(p.gamma > 0.0, "gamma must be > 0");
  check(p.tol > 0.0, "tol must be > 0");
  check(p.max_passes >= 1, "max_passes must be >= 1");
  check(p.cache_mb > 0.0, "cache_mb must be > 0");
}

nlohmann::json to_json(const SvrParams& p) {
  return {{"c", p.c},     {"epsilon", p.epsilon},       {"gamma", p.gamma},
          {"kernel", to_string(p.kernel)}, {"tol", p.tol}, {"max_passes", p.max_passes},
          {"cache_mb", p.cache_mb}};
}

SvrParams svr_params_from_json(const nlohmann::json& doc, SvrParams p) {
  require(doc.is_object(), ErrorKind::kConfig, "svr parameters must be an object");
  for (const auto& [key, value] : doc.items()) {
    try {
      if (key == "c") p.c = value.get<double>();
      else if (key == "epsilon") p.epsilon = value.get<double>();
      else if (key == "gamma") p.gamma = value.get<double>();
      else if (key == "kernel") p.kernel = kernel_from_string(value.get<std::string>());
      else if (key == "tol") p.tol = value.get<double>();
      else if (key == "max_passes") p.max_passes = value.get<int>();
      else if (key == "cache_mb") p.cache_mb = value.get<double>();
      else fail(ErrorKind::kConfig, "unknown svr parameter \"" + key + "\"");
    } catch (const nlohmann::json::exception&) {
      fail(ErrorKind::kConfig, "svr parameter \"" + key + "\" has the wrong type");
    }
  }
  return p;
}

double rbf_kernel(std::span<const double> a, std::span<const double> b, double gamma) {
  require(a.size() == b.size(), ErrorKind::kShape, "kernel arguments differ in dimension");
  double d2 = 0.0;
  for (size_t i = 0; i < a.size(); ++i) d2 += (a[i] - b[i]) * (a[i] - b[i]);
  return std::exp(-gamma * d2);
}

double linear_kernel(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), ErrorKind::kShape, "kernel arguments differ in dimension");
  double dot = 0.0;
  for (size_t i = 0; i < a.size(); ++i) dot += a[i] * b[i];
  return dot;
}

double kernel_value(const SvrParams& params, std::span<const double> a, std::span<const double> b) {
  return params.kernel == KernelKind::kRbf ? rbf_kernel(a, b, params.gamma) : linear_kernel(a, b);
}

double SvrModel::predict_row(std::span<const double> row) const {
  double out = 0.0;
  for (size_t s = 0; s < dual_coefficients.size(); ++s)
    out += dual_coefficients[s] * kernel_value(params, support_vectors.row(s), row);
  return out + bias;
}

std::vector<double> SvrModel::predict(const Matrix& x) const {
  require(x.cols() == n_features, ErrorKind::kShape,
          "svr model expects " + std::to_string(n_features) + " features, got " +
              std::to_string(x.cols()));
  std::vector<double> out(x.rows());
  for (size_t r = 0; r < x.rows(); ++r) out[r] = predict_row(x.row(r));
  return out;
}

std::vector<double> SvrModel::dense_beta(size_t n_rows) const {
  std::vector<double> beta(n_rows, 0.0);
  for (size_t s = 0; s < support_indices.size(); ++s) {
    require(support_indices[s] < n_rows, ErrorKind::kShape, "support index beyond row count");
    beta[support_indices[s]] = dual_coefficients[s];
  }
  return beta;
}

SvrModel train_svr(const Matrix& x, std::span<const double> y, const SvrParams& params) {
  validate(params);
  const size_t n = x.rows();
  require(n >= 2, ErrorKind::kArgument, "svr training needs at least two rows");
  require(y.size() == n, ErrorKind::kShape, "svr target length does not match row count");
  for (double v : x.data()) require(std::isfinite(v), ErrorKind::kData, "svr features contain a non-finite value");
  for (double v : y) require(std::isfinite(v), ErrorKind::kData, "svr targets contain a non-finite value");

  // Variables t < n carry alpha (sign +1), t >= n carry alpha* (sign -1).
  const size_t m = 2 * n;
  const double c = params.c;
  std::vector<double> alpha(m, 0.0);
  std::vector<double> grad(m);
  std::vector<double> p(m);
  for (size_t i = 0; i < n; ++i) {
    p[i] = params.epsilon - y[i];
    p[i + n] = params.epsilon + y[i];
  }
  grad = p;
  auto sign = [n](size_t t) { return t < n ? 1.0 : -1.0; };
  auto in_up = [&](size_t t) { return t < n ? alpha[t] < c : alpha[t] > 0.0; };
  auto in_low = [&](size_t t) { return t < n ? alpha[t] > 0.0 : alpha[t] < c; };

  KernelCache cache(x, params);
  std::vector<double> diag(n);
  for (size_t i = 0; i < n; ++i) diag[i] = kernel_value(params, x.row(i), x.row(i));

  const long long budget = static_cast<long long>(params.max_passes) * static_cast<long long>(m);
  long long iter = 0;
  double gap = INFINITY;
  for (;; ++iter) {
    // Second-order working set: i is the most violating up-variable, j the
    // low-variable with the largest guaranteed decrease paired with i.
    double gmax = -INFINITY;
    double gmin = INFINITY;
    size_t i = 0;
    for (size_t t = 0; t < m; ++t) {
      const double v = -sign(t) * grad[t];
      if (in_up(t) && v > gmax) {
        gmax = v;
        i = t;
      }
    }
    const size_t ri = i % n;
    const std::vector<double>& ki = cache.row(ri);
    size_t j = 0;
    double best = INFINITY;
    for (size_t t = 0; t < m; ++t) {
      if (!in_low(t)) continue;
      const double v = -sign(t) * grad[t];
      gmin = std::min(gmin, v);
      const double b = gmax - v;
      if (b <= 0.0) continue;
      const size_t rt = t % n;
      double a = diag[ri] + diag[rt] - 2.0 * ki[rt];
      if (a <= 0.0) a = kTau;
      const double score = -b * b / a;
      if (score < best) {
        best = score;
        j = t;
      }
    }
    gap = gmax - gmin;
    if (gap <= params.tol) break;
    if (iter >= budget)
      throw ConvergenceError("svr did not converge within " + std::to_string(budget) +
                                 " iterations; worst KKT violation " + stats::format_double(gap),
                             gap);

    const size_t rj = j % n;
    const std::vector<double>& kj = cache.row(rj);
    const double yi = sign(i);
    const double yj = sign(j);
    const double kij = ki[rj];
    const double old_i = alpha[i];
    const double old_j = alpha[j];

    if (yi != yj) {
      double quad = diag[ri] + diag[rj] - 2.0 * kij;
      if (quad <= 0.0) quad = kTau;
      const double delta = (-grad[i] - grad[j]) / quad;
      const double diff = alpha[i] - alpha[j];
      alpha[i] += delta;
      alpha[j] += delta;
      if (diff > 0.0) {
        if (alpha[j] < 0.0) {
          alpha[j] = 0.0;
          alpha[i] = diff;
        }
      } else if (alpha[i] < 0.0) {
        alpha[i] = 0.0;
        alpha[j] = -diff;
      }
      if (diff > 0.0) {
        if (alpha[i] > c) {
          alpha[i] = c;
          alpha[j] = c - diff;
        }
      } else if (alpha[j] > c) {
        alpha[j] = c;
        alpha[i] = c + diff;
      }
    } else {
      double quad = diag[ri] + diag[rj] - 2.0 * kij;
      if (quad <= 0.0) quad = kTau;
      const double delta = (grad[i] - grad[j]) / quad;
      const double sum = alpha[i] + alpha[j];
      alpha[i] -= delta;
      alpha[j] += delta;
      if (sum > c) {
        if (alpha[i] > c) {
          alpha[i] = c;
          alpha[j] = sum - c;
        }
      } else if (alpha[j] < 0.0) {
        alpha[j] = 0.0;
        alpha[i] = sum;
      }
      if (sum > c) {
        if (alpha[j] > c) {
          alpha[j] = c;
          alpha[i] = sum - c;
        }
      } else if (alpha[i] < 0.0) {
        alpha[i] = 0.0;
        alpha[j] = sum;
      }
    }

    const double di = (alpha[i] - old_i) * yi;
    const double dj = (alpha[j] - old_j) * yj;
    for (size_t k = 0; k < n; ++k) {
      const double change = ki[k] * di + kj[k] * dj;
      grad[k] += change;
      grad[k + n] -= change;
    }
  }

  // Bias from the free variables, else the midpoint of the feasible interval.
  double ub = INFINITY;
  double lb = -INFINITY;
  double sum_free = 0.0;
  size_t n_free = 0;
  for (size_t t = 0; t < m; ++t) {
    const double yg = sign(t) * grad[t];
    if (alpha[t] >= c) {
      if (sign(t) < 0) ub = std::min(ub, yg);
      else lb = std::max(lb, yg);
    } else if (alpha[t] <= 0.0) {
      if (sign(t) > 0) ub = std::min(ub, yg);
      else lb = std::max(lb, yg);
    } else {
      ++n_free;
      sum_free += yg;
    }
  }
  const double rho = n_free > 0 ? sum_free / static_cast<double>(n_free) : 0.5 * (ub + lb);

  SvrModel model;
  model.params = params;
  model.n_features = x.cols();
  model.bias = -rho;
  model.iterations = iter;
  model.final_gap = gap;
  double objective = 0.0;
  for (size_t t = 0; t < m; ++t) objective -= 0.5 * alpha[t] * (grad[t] + p[t]);
  model.objective = objective;
  std::vector<double> sv_data;
  for (size_t i = 0; i < n; ++i) {
    const double beta = alpha[i] - alpha[i + n];
    if (beta == 0.0) continue;
    model.dual_coefficients.push_back(beta);
    model.support_indices.push_back(i);
    const auto row = x.row(i);
    sv_data.insert(sv_data.end(), row.begin(), row.end());
  }
  model.support_vectors = Matrix(model.dual_coefficients.size(), x.cols(), std::move(sv_data));
  return model;
}

double svr_dual_objective(const Matrix& x, std::span<const double> y, std::span<const double> beta,
                          const SvrParams& params) {
  const size_t n = x.rows();
  require(y.size() == n && beta.size() == n, ErrorKind::kShape, "dual objective shape mismatch");
  double quad = 0.0;
  double lin = 0.0;
  for (size_t i = 0; i < n; ++i) {
    if (beta[i] == 0.0) continue;
    for (size_t j = 0; j < n; ++j)
      if (beta[j] != 0.0) quad += beta[i] * beta[j] * kernel_value(params, x.row(i), x.row(j));
    lin += y[i] * beta[i] - params.epsilon * std::abs(beta[i]);
  }
  return -0.5 * quad + lin;
}

double kkt_violation(const Matrix& x, std::span<const double> y, std::span<const double> beta,
                     double bias, const SvrParams& params) {
  const size_t n = x.rows();
  require(y.size() == n && beta.size() == n, ErrorKind::kShape, "kkt check shape mismatch");
  const double eps = params.epsilon;
  const double at_bound = params.c * (1.0 - 1e-12);
  double worst = 0.0;
  for (size_t i = 0; i < n; ++i) {
    double f = bias;
    for (size_t j = 0; j < n; ++j)
      if (beta[j] != 0.0) f += beta[j] * kernel_value(params, x.row(j), x.row(i));
    const double r = y[i] - f;
    double v = 0.0;
    if (beta[i] == 0.0) v = std::max(0.0, std::abs(r) - eps);
    else if (beta[i] >= at_bound) v = std::max(0.0, eps - r);
    else if (beta[i] <= -at_bound) v = std::max(0.0, r + eps);
    else if (beta[i] > 0.0) v = std::abs(r - eps);
    else v = std::abs(r + eps);
    worst = std::max(worst, v);
  }
  return worst;
}

nlohmann::json SvrModel::to_json() const {
  nlohmann::json svs = nlohmann::json::array();
  for (size_t s = 0; s < support_vectors.rows(); ++s) {
    const auto row = support_vectors.row(s);
    svs.push_back(std::vector<double>(row.begin(), row.end()));
  }
  return {{"format", "rf_forge.svr"},
          {"version", kFormatVersion},
          {"params", rfforge::to_json(params)},
          {"n_features", n_features},
          {"bias", bias},
          {"dual_coefficients", dual_coefficients},
          {"support_indices", support_indices},
          {"support_vectors", svs},
          {"solver", {{"iterations", iterations}, {"final_gap", final_gap}, {"objective", objective}}}};
}

SvrModel SvrModel::from_json(const nlohmann::json& doc) {
  SvrModel model;
  try {
    require(doc.at("format") == "rf_forge.svr", ErrorKind::kData, "not an svr model document");
    require(doc.at("version").get<int>() == kFormatVersion, ErrorKind::kData,
            "unsupported svr model version");
    model.params = svr_params_from_json(doc.at("params"));
    model.n_features = doc.at("n_features").get<size_t>();
    model.bias = doc.at("bias").get<double>();
    model.dual_coefficients = doc.at("dual_coefficients").get<std::vector<double>>();
    model.support_indices = doc.at("support_indices").get<std::vector<size_t>>();
    std::vector<double> data;
    for (const auto& row : doc.at("support_vectors")) {
      auto values = row.get<std::vector<double>>();
      require(values.size() == model.n_features, ErrorKind::kData,
              "support vector width does not match n_features");
      data.insert(data.end(), values.begin(), values.end());
    }
    require(model.dual_coefficients.size() * model.n_features == data.size() &&
                model.support_indices.size() == model.dual_coefficients.size(),
            ErrorKind::kData, "svr model arrays disagree in length");
    model.support_vectors = Matrix(model.dual_coefficients.size(), model.n_features, std::move(data));
    const auto& solver = doc.at("solver");
    model.iterations = solver.at("iterations").get<long long>();
    model.final_gap = solver.at("final_gap").get<double>();
    model.objective = solver.at("objective").get<double>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kData, std::string("malformed svr model document: ") + e.what());
  }
  return model;
}

}  // namespace rfforge
