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

#include "oracles.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace rfforge::oracle {

// ---- gbdt ------------------------------------------------------------------

Split best_split(const Matrix& x, std::span<const double> grad, std::span<const size_t> rows,
                 const GbdtParams& params) {
  double g_total = 0.0;
  for (size_t r : rows) g_total += grad[r];
  const double h_total = static_cast<double>(rows.size());
  const double lambda = params.lambda;

  std::vector<Split> candidates;
  for (size_t f = 0; f < x.cols(); ++f) {
    std::set<double> distinct;
    for (size_t r : rows) distinct.insert(x(r, f));
    std::vector<double> values(distinct.begin(), distinct.end());
    for (size_t k = 0; k + 1 < values.size(); ++k) {
      const double lo = values[k], hi = values[k + 1];
      double thr = 0.5 * lo + 0.5 * hi;
      if (!(thr > lo)) thr = hi;
      double gl = 0.0, hl = 0.0;
      for (size_t r : rows)
        if (x(r, f) < thr) {
          gl += grad[r];
          hl += 1.0;
        }
      const double gr = g_total - gl;
      const double hr = h_total - hl;
      if (hl < params.min_child_weight || hr < params.min_child_weight) continue;
      const double gain =
          0.5 * (gl * gl / (hl + lambda) + gr * gr / (hr + lambda) - g_total * g_total / (h_total + lambda)) -
          params.gamma;
      if (gain > 0.0) candidates.push_back({static_cast<int>(f), thr, gain});
    }
  }
  if (candidates.empty()) return {};
  double best = -INFINITY;
  for (const auto& c : candidates) best = std::max(best, c.gain);
  const double tie = 1e-12 * std::max(1.0, std::abs(best));
  for (const auto& c : candidates)  // generated in (feature, threshold) order
    if (c.gain >= best - tie) return c;
  return {};
}

double leaf_weight(double g, double h, double alpha, double lambda, double max_delta_step) {
  const double soft = g > alpha ? g - alpha : (g < -alpha ? g + alpha : 0.0);
  double w = -soft / (h + lambda);
  if (max_delta_step > 0.0 && std::abs(w) > max_delta_step) w = w > 0 ? max_delta_step : -max_delta_step;
  return w;
}

namespace {

void check_node(const Tree& tree, int id, const std::vector<size_t>& rows, int depth, const Matrix& x,
                const std::vector<double>& grad, const GbdtParams& p, TreeCheck& out, size_t tree_index) {
  if (!out.mismatch.empty()) return;
  const auto& node = tree.nodes[static_cast<size_t>(id)];
  ++out.nodes_checked;
  auto where = [&] {
    return "tree " + std::to_string(tree_index) + " node " + std::to_string(id) + ": ";
  };
  if (node.cover != static_cast<double>(rows.size())) {
    out.mismatch = where() + "cover " + std::to_string(node.cover) + " vs " + std::to_string(rows.size());
    return;
  }
  Split want;
  if (depth < p.max_depth) want = best_split(x, grad, rows, p);
  if (want.feature < 0) {
    if (!node.is_leaf()) {
      out.mismatch = where() + "split on feature " + std::to_string(node.feature) + " but no admissible split";
      return;
    }
    double g = 0.0;
    for (size_t r : rows) g += grad[r];
    const double w = leaf_weight(g, static_cast<double>(rows.size()), p.alpha, p.lambda, p.max_delta_step);
    out.worst_weight_error = std::max(out.worst_weight_error, std::abs(w - node.weight));
    return;
  }
  if (node.is_leaf()) {
    out.mismatch = where() + "leaf but oracle splits feature " + std::to_string(want.feature);
    return;
  }
  if (node.feature != want.feature || node.threshold != want.threshold ||
      std::abs(node.gain - want.gain) > 1e-10 * std::max(1.0, std::abs(want.gain))) {
    std::ostringstream msg;
    msg.precision(17);
    msg << where() << "split (" << node.feature << ", " << node.threshold << ", gain " << node.gain
        << ") vs oracle (" << want.feature << ", " << want.threshold << ", gain " << want.gain << ")";
    out.mismatch = msg.str();
    return;
  }
  std::vector<size_t> left, right;
  for (size_t r : rows) (x(r, static_cast<size_t>(want.feature)) < want.threshold ? left : right).push_back(r);
  check_node(tree, node.left, left, depth + 1, x, grad, p, out, tree_index);
  check_node(tree, node.right, right, depth + 1, x, grad, p, out, tree_index);
}

double route(const Tree& tree, std::span<const double> row) {
  size_t at = 0;
  while (tree.nodes[at].feature >= 0) {
    const auto& n = tree.nodes[at];
    at = static_cast<size_t>(row[static_cast<size_t>(n.feature)] < n.threshold ? n.left : n.right);
  }
  return tree.nodes[at].weight;
}

}  // namespace

TreeCheck check_ensemble(const TreeEnsemble& model, const Matrix& x, std::span<const double> y) {
  const auto& p = model.params;
  if (p.subsample < 1.0 || p.colsample_bytree < 1.0 || p.colsample_bylevel < 1.0)
    throw std::invalid_argument("check_ensemble needs subsample = colsample = 1");
  TreeCheck out;
  const size_t n = x.rows();
  std::vector<double> pred(n, p.base_score), grad(n);
  std::vector<size_t> all(n);
  for (size_t i = 0; i < n; ++i) all[i] = i;
  for (size_t t = 0; t < model.trees.size(); ++t) {
    for (size_t i = 0; i < n; ++i) grad[i] = pred[i] - y[i];
    check_node(model.trees[t], 0, all, 0, x, grad, p, out, t);
    if (!out.mismatch.empty()) return out;
    for (size_t i = 0; i < n; ++i) pred[i] += p.learning_rate * route(model.trees[t], x.row(i));
  }
  return out;
}

// ---- svr -------------------------------------------------------------------

namespace {

double kernel(const SvrParams& p, std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  if (p.kernel == KernelKind::kLinear) {
    for (size_t k = 0; k < a.size(); ++k) acc += a[k] * b[k];
    return acc;
  }
  for (size_t k = 0; k < a.size(); ++k) acc += (a[k] - b[k]) * (a[k] - b[k]);
  return std::exp(-p.gamma * acc);
}

Eigen::MatrixXd gram(const Matrix& x, const SvrParams& p) {
  const auto n = static_cast<Eigen::Index>(x.rows());
  Eigen::MatrixXd k(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      k(i, j) = kernel(p, x.row(static_cast<size_t>(i)), x.row(static_cast<size_t>(j)));
  return k;
}

}  // namespace

double svr_objective(const Matrix& x, std::span<const double> y, std::span<const double> beta,
                     const SvrParams& params) {
  const Eigen::MatrixXd k = gram(x, params);
  const auto n = static_cast<Eigen::Index>(x.rows());
  Eigen::VectorXd b(n), yy(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    b(i) = beta[static_cast<size_t>(i)];
    yy(i) = y[static_cast<size_t>(i)];
  }
  return -0.5 * b.dot(k * b) + yy.dot(b) - params.epsilon * b.lpNorm<1>();
}

double svr_kkt_violation(const Matrix& x, std::span<const double> y, std::span<const double> beta,
                         double bias, const SvrParams& params) {
  const Eigen::MatrixXd k = gram(x, params);
  const double bound = params.c * (1 - 1e-9);
  double worst = 0.0;
  for (size_t i = 0; i < x.rows(); ++i) {
    double f = bias;
    for (size_t j = 0; j < x.rows(); ++j) f += beta[j] * k(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    const double r = y[i] - f;  // residual
    const double e = params.epsilon;
    double v;
    if (std::abs(beta[i]) < 1e-12 * params.c) v = std::max(0.0, std::abs(r) - e);
    else if (beta[i] >= bound) v = std::max(0.0, e - r);
    else if (beta[i] <= -bound) v = std::max(0.0, r + e);
    else v = beta[i] > 0 ? std::abs(r - e) : std::abs(r + e);
    worst = std::max(worst, v);
  }
  return worst;
}

QpSolution solve_svr_dual(const Matrix& x, std::span<const double> y, const SvrParams& params) {
  const auto n = static_cast<Eigen::Index>(x.rows());
  const double c = params.c;
  const Eigen::MatrixXd k = gram(x, params);
  Eigen::MatrixXd q(2 * n, 2 * n);
  q << k, -k, -k, k;
  Eigen::VectorXd lin(2 * n);
  for (Eigen::Index i = 0; i < n; ++i) {
    lin(i) = params.epsilon - y[static_cast<size_t>(i)];
    lin(n + i) = params.epsilon + y[static_cast<size_t>(i)];
  }
  Eigen::RowVectorXd a(2 * n);
  a << Eigen::RowVectorXd::Ones(n), -Eigen::RowVectorXd::Ones(n);

  // Minimize F(z) = 1/2 z'Qz + lin'z subject to 0 < z < C, a z = 0.
  auto f = [&](const Eigen::VectorXd& z) { return 0.5 * z.dot(q * z) + lin.dot(z); };
  auto barrier = [&](const Eigen::VectorXd& z, double t) {
    double b = t * f(z);
    for (Eigen::Index i = 0; i < z.size(); ++i) b -= std::log(z(i)) + std::log(c - z(i));
    return b;
  };
  Eigen::VectorXd z = Eigen::VectorXd::Constant(2 * n, 0.5 * c);
  const double m = static_cast<double>(4 * n);
  QpSolution sol;
  double scale = std::max(1.0, q.cwiseAbs().maxCoeff() * c + lin.cwiseAbs().maxCoeff());
  for (double t = 1.0 / scale; m / t > 1e-13 * scale; t *= 10.0) {
    for (int it = 0; it < 200; ++it) {
      Eigen::VectorXd grad = t * (q * z + lin);
      Eigen::VectorXd d2(2 * n);
      for (Eigen::Index i = 0; i < z.size(); ++i) {
        grad(i) += -1.0 / z(i) + 1.0 / (c - z(i));
        d2(i) = 1.0 / (z(i) * z(i)) + 1.0 / ((c - z(i)) * (c - z(i)));
      }
      // Equality-constrained Newton step through the Schur complement of the
      // barrier Hessian, then projected so a'z stays exactly zero.
      Eigen::MatrixXd h = t * q;
      h.diagonal() += d2;
      const Eigen::LDLT<Eigen::MatrixXd> ldlt(h);
      const Eigen::VectorXd hg = ldlt.solve(grad);
      const Eigen::VectorXd ha = ldlt.solve(a.transpose());
      const double nu = -a.dot(hg) / a.dot(ha);
      Eigen::VectorXd dz = -(hg + nu * ha);
      dz -= a.transpose() * (a.dot(dz) / a.squaredNorm());
      const double decrement = -grad.dot(dz);
      ++sol.newton_steps;
      if (decrement < 1e-14) break;
      double s = 1.0;
      for (Eigen::Index i = 0; i < z.size(); ++i) {
        if (dz(i) < 0) s = std::min(s, -0.99 * z(i) / dz(i));
        if (dz(i) > 0) s = std::min(s, 0.99 * (c - z(i)) / dz(i));
      }
      const double b0 = barrier(z, t);
      while (s > 1e-16 && barrier(z + s * dz, t) > b0 - 0.25 * s * decrement) s *= 0.5;
      if (s <= 1e-16) break;
      z += s * dz;
    }
  }
  sol.beta.resize(static_cast<size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) sol.beta[static_cast<size_t>(i)] = z(i) - z(n + i);
  sol.objective = -f(z);
  return sol;
}

// ---- shapley ---------------------------------------------------------------

namespace {

using ValueFn = std::function<double(unsigned mask)>;

std::vector<double> enumerate(size_t m, const ValueFn& v, double* base) {
  if (m > 20) throw std::invalid_argument("too many features to enumerate");
  const unsigned full = 1u << m;
  std::vector<double> value(full);
  for (unsigned s = 0; s < full; ++s) value[s] = v(s);
  std::vector<double> fact(m + 1, 1.0);
  for (size_t i = 1; i <= m; ++i) fact[i] = fact[i - 1] * static_cast<double>(i);
  std::vector<double> phi(m, 0.0);
  for (size_t i = 0; i < m; ++i)
    for (unsigned s = 0; s < full; ++s) {
      if (s & (1u << i)) continue;
      const size_t size = static_cast<size_t>(__builtin_popcount(s));
      const double w = fact[size] * fact[m - size - 1] / fact[m];
      phi[i] += w * (value[s | (1u << i)] - value[s]);
    }
  if (base != nullptr) *base = value[0];
  return phi;
}

double tree_expectation(const Tree& tree, size_t id, const std::vector<double>& reach,
                        std::span<const double> row, unsigned mask) {
  const auto& node = tree.nodes[id];
  if (node.feature < 0) return node.weight;
  const auto l = static_cast<size_t>(node.left), r = static_cast<size_t>(node.right);
  if (mask & (1u << node.feature))
    return tree_expectation(tree, row[static_cast<size_t>(node.feature)] < node.threshold ? l : r, reach, row, mask);
  double fl;
  if (reach[id] > 0) {
    fl = reach[l] / reach[id];
  } else if (node.cover > 0) {
    fl = tree.nodes[l].cover / node.cover;
  } else {
    fl = 0.5;
  }
  double out = 0.0;
  if (fl > 0) out += fl * tree_expectation(tree, l, reach, row, mask);
  if (fl < 1) out += (1 - fl) * tree_expectation(tree, r, reach, row, mask);
  return out;
}

}  // namespace

std::vector<double> tree_shapley(const TreeEnsemble& model, const Matrix& background,
                                 std::span<const double> row, double* base) {
  std::vector<std::vector<double>> reach(model.trees.size());
  for (size_t t = 0; t < model.trees.size(); ++t) {
    const auto& tree = model.trees[t];
    reach[t].assign(tree.nodes.size(), 0.0);
    for (size_t b = 0; b < background.rows(); ++b) {
      size_t at = 0;
      reach[t][at] += 1.0;
      while (tree.nodes[at].feature >= 0) {
        const auto& n = tree.nodes[at];
        at = static_cast<size_t>(background(b, static_cast<size_t>(n.feature)) < n.threshold ? n.left : n.right);
        reach[t][at] += 1.0;
      }
    }
  }
  return enumerate(model.n_features,
                   [&](unsigned mask) {
                     double v = model.params.base_score;
                     for (size_t t = 0; t < model.trees.size(); ++t)
                       v += model.params.learning_rate * tree_expectation(model.trees[t], 0, reach[t], row, mask);
                     return v;
                   },
                   base);
}

std::vector<double> interventional_shapley(const std::function<std::vector<double>(const Matrix&)>& f,
                                           const Matrix& background, std::span<const double> row,
                                           double* base) {
  const size_t m = background.cols();
  return enumerate(m,
                   [&](unsigned mask) {
                     Matrix z = background;
                     for (size_t b = 0; b < z.rows(); ++b)
                       for (size_t j = 0; j < m; ++j)
                         if (mask & (1u << j)) z(b, j) = row[j];
                     const auto pred = f(z);
                     double s = 0.0;
                     for (double p : pred) s += p;
                     return s / static_cast<double>(pred.size());
                   },
                   base);
}

// ---- tests -----------------------------------------------------------------

double t_two_sided_quadrature(double t, double dof) {
  const double norm = std::exp(std::lgamma(0.5 * (dof + 1)) - std::lgamma(0.5 * dof)) / std::sqrt(dof * M_PI);
  auto density = [&](double u) { return norm * std::pow(1.0 + u * u / dof, -0.5 * (dof + 1)); };
  const double upper = std::abs(t);
  const int steps = 20000;
  const double h = upper / steps;
  double acc = density(0) + density(upper);
  for (int i = 1; i < steps; ++i) acc += (i % 2 ? 4.0 : 2.0) * density(i * h);
  return 1.0 - 2.0 * acc * h / 3.0;
}

double ks_statistic_ecdf(std::span<const double> a, std::span<const double> b) {
  auto ecdf = [](std::span<const double> s, double v) {
    double c = 0;
    for (double x : s) c += x <= v ? 1 : 0;
    return c / static_cast<double>(s.size());
  };
  double d = 0.0;
  for (auto s : {a, b})
    for (double v : s) d = std::max(d, std::abs(ecdf(a, v) - ecdf(b, v)));
  return d;
}

// ---- files -----------------------------------------------------------------

std::filesystem::path fresh_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "rf_forge_tests" / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace rfforge::oracle
