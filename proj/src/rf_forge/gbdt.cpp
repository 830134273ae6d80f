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

#include "rf_forge/gbdt.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <string>

#include "rf_forge/rng.hpp"

namespace rfforge {

namespace {

constexpr int kFormatVersion = 1;

double rmse_of(std::span<const double> pred, std::span<const double> y) {
  double sum = 0.0;
  for (size_t i = 0; i < y.size(); ++i) sum += (pred[i] - y[i]) * (pred[i] - y[i]);
  return std::sqrt(sum / static_cast<double>(y.size()));
}

// Training loss tracked on extended-precision running predictions, so late
// rounds whose leaf updates fall below one ulp of the double predictions do not
// show up as rounding noise in the loss curve.
double rmse_of(std::span<const long double> pred, std::span<const double> y) {
  long double sum = 0.0L;
  for (size_t i = 0; i < y.size(); ++i) sum += (pred[i] - y[i]) * (pred[i] - y[i]);
  return static_cast<double>(std::sqrt(sum / static_cast<long double>(y.size())));
}

void check_finite(const Matrix& x, std::span<const double> y, const char* what) {
  for (double v : x.data())
    require(std::isfinite(v), ErrorKind::kData, std::string(what) + " features contain a non-finite value");
  for (double v : y)
    require(std::isfinite(v), ErrorKind::kData, std::string(what) + " targets contain a non-finite value");
}

size_t sample_count(double fraction, size_t total) {
  const auto k = static_cast<size_t>(std::floor(fraction * static_cast<double>(total) + 1e-9));
  return std::clamp<size_t>(k, 1, total);
}

std::vector<size_t> sample_features(std::vector<size_t> pool, double fraction, Rng& rng) {
  if (fraction >= 1.0) return pool;
  const size_t k = sample_count(fraction, pool.size());
  rng.shuffle(pool);
  pool.resize(k);
  std::sort(pool.begin(), pool.end());
  return pool;
}

// Gains this close count as tied, so the lowest feature and threshold win
// whatever order the gradient sums were accumulated in.
constexpr double kGainTie = 1e-12;

double midpoint(double lo, double hi) {
  const double mid = 0.5 * lo + 0.5 * hi;
  return mid > lo ? mid : hi;
}

struct Candidate {
  double gain = 0.0;
  int feature = -1;
  double threshold = 0.0;
};

struct NodeStats {
  double g = 0.0;
  double h = 0.0;
};

}  // namespace

GbdtParams oil_gbdt_params() {
  GbdtParams p;
  p.max_depth = 4;
  p.min_child_weight = 6;
  p.learning_rate = 0.05;
  p.subsample = 0.9;
  p.colsample_bytree = 1.0;
  p.alpha = 0.3;
  p.lambda = 0.04;
  p.colsample_bylevel = 1.0;
  p.gamma = 0.01;
  p.max_delta_step = 0.1;
  p.n_rounds = 999;
  return p;
}

GbdtParams gas_gbdt_params() {
  GbdtParams p;
  p.max_depth = 4;
  p.min_child_weight = 3;
  p.learning_rate = 0.1;
  p.subsample = 0.9;
  p.colsample_bytree = 1.0;
  p.alpha = 0.8;
  p.lambda = 0.08;
  p.colsample_bylevel = 0.9;
  p.gamma = 0.01;
  p.max_delta_step = 0.1;
  p.n_rounds = 999;
  return p;
}

void validate(const GbdtParams& p) {
  auto check = [](bool ok, const std::string& what) {
    require(ok, ErrorKind::kArgument, "invalid gbdt parameter: " + what);
  };
  check(p.max_depth >= 0, "max_depth must be >= 0");
  check(p.min_child_weight >= 0.0, "min_child_weight must be >= 0");
  check(p.learning_rate >= 0.0 && std::isfinite(p.learning_rate), "learning_rate must be >= 0");
  check(p.subsample > 0.0 && p.subsample <= 1.0, "subsample must lie in (0, 1]");
  check(p.colsample_bytree > 0.0 && p.colsample_bytree <= 1.0, "colsample_bytree must lie in (0, 1]");
  check(p.colsample_bylevel > 0.0 && p.colsample_bylevel <= 1.0,
        "colsample_bylevel must lie in (0, 1]");
  check(p.alpha >= 0.0, "alpha must be >= 0");
  check(p.lambda >= 0.0, "lambda must be >= 0");
  check(p.gamma >= 0.0, "gamma must be >= 0");
  check(p.max_delta_step >= 0.0, "max_delta_step must be >= 0");
  check(p.n_rounds >= 1, "n_rounds must be >= 1");
  check(std::isfinite(p.base_score), "base_score must be finite");
  check(p.early_stopping_rounds >= 0, "early_stopping_rounds must be >= 0");
}

nlohmann::json to_json(const GbdtParams& p) {
  return {{"max_depth", p.max_depth},
          {"min_child_weight", p.min_child_weight},
          {"learning_rate", p.learning_rate},
          {"subsample", p.subsample},
          {"colsample_bytree", p.colsample_bytree},
          {"colsample_bylevel", p.colsample_bylevel},
          {"alpha", p.alpha},
          {"lambda", p.lambda},
          {"gamma", p.gamma},
          {"max_delta_step", p.max_delta_step},
          {"n_rounds", p.n_rounds},
          {"base_score", p.base_score},
          {"seed", p.seed},
          {"early_stopping_rounds", p.early_stopping_rounds}};
}

GbdtParams gbdt_params_from_json(const nlohmann::json& doc, GbdtParams p) {
  require(doc.is_object(), ErrorKind::kConfig, "gbdt parameters must be an object");
  for (const auto& [key, value] : doc.items()) {
    try {
      if (key == "max_depth") p.max_depth = value.get<int>();
      else if (key == "min_child_weight") p.min_child_weight = value.get<double>();
      else if (key == "learning_rate") p.learning_rate = value.get<double>();
      else if (key == "subsample") p.subsample = value.get<double>();
      else if (key == "colsample_bytree") p.colsample_bytree = value.get<double>();
      else if (key == "colsample_bylevel") p.colsample_bylevel = value.get<double>();
      else if (key == "alpha") p.alpha = value.get<double>();
      else if (key == "lambda") p.lambda = value.get<double>();
      else if (key == "gamma") p.gamma = value.get<double>();
      else if (key == "max_delta_step") p.max_delta_step = value.get<double>();
      else if (key == "n_rounds") p.n_rounds = value.get<int>();
      else if (key == "base_score") p.base_score = value.get<double>();
      else if (key == "seed") p.seed = value.get<uint64_t>();
      else if (key == "early_stopping_rounds") p.early_stopping_rounds = value.get<int>();
      else fail(ErrorKind::kConfig, "unknown gbdt parameter \"" + key + "\"");
    } catch (const nlohmann::json::exception&) {
      fail(ErrorKind::kConfig, "gbdt parameter \"" + key + "\" has the wrong type");
    }
  }
  return p;
}

double split_gain(double gl, double hl, double gr, double hr, double lambda, double gamma) {
  const double g = gl + gr;
  const double h = hl + hr;
  return 0.5 * (gl * gl / (hl + lambda) + gr * gr / (hr + lambda) - g * g / (h + lambda)) - gamma;
}

double leaf_weight(double g, double h, double alpha, double lambda, double max_delta_step) {
  if (h + lambda <= 0.0) return 0.0;
  double shrunk = 0.0;
  if (g > alpha) shrunk = g - alpha;
  else if (g < -alpha) shrunk = g + alpha;
  double w = -shrunk / (h + lambda);
  if (max_delta_step > 0.0) w = std::clamp(w, -max_delta_step, max_delta_step);
  return w;
}

size_t Tree::leaf_index(std::span<const double> row) const {
  size_t at = 0;
  while (!nodes[at].is_leaf()) {
    const auto& n = nodes[at];
    at = static_cast<size_t>(row[static_cast<size_t>(n.feature)] < n.threshold ? n.left : n.right);
  }
  return at;
}

double Tree::predict(std::span<const double> row) const { return nodes[leaf_index(row)].weight; }

int Tree::depth() const {
  std::function<int(size_t)> walk = [&](size_t at) -> int {
    const auto& n = nodes[at];
    if (n.is_leaf()) return 0;
    return 1 + std::max(walk(static_cast<size_t>(n.left)), walk(static_cast<size_t>(n.right)));
  };
  return nodes.empty() ? 0 : walk(0);
}

double TreeEnsemble::predict_row(std::span<const double> row) const {
  double out = params.base_score;
  for (const auto& tree : trees) out += params.learning_rate * tree.predict(row);
  return out;
}

std::vector<double> TreeEnsemble::predict(const Matrix& x) const {
  require(x.cols() == n_features, ErrorKind::kShape,
          "gbdt model expects " + std::to_string(n_features) + " features, got " +
              std::to_string(x.cols()));
  std::vector<double> out(x.rows());
  for (size_t r = 0; r < x.rows(); ++r) out[r] = predict_row(x.row(r));
  return out;
}

TreeEnsemble train_gbdt(const Matrix& x, std::span<const double> y, const GbdtParams& params,
                        const EvalSet& eval) {
  validate(params);
  require(x.rows() > 0 && x.cols() > 0, ErrorKind::kArgument, "gbdt training needs a non-empty matrix");
  require(y.size() == x.rows(), ErrorKind::kShape, "gbdt target length does not match row count");
  check_finite(x, y, "training");
  if (eval.x != nullptr) {
    require(eval.x->cols() == x.cols() && eval.y.size() == eval.x->rows(), ErrorKind::kShape,
            "gbdt evaluation set shape mismatch");
    check_finite(*eval.x, eval.y, "evaluation");
  }
  require(params.early_stopping_rounds == 0 || eval.x != nullptr, ErrorKind::kArgument,
          "early stopping needs an evaluation set");

  const size_t n = x.rows();
  const size_t m = x.cols();

  std::vector<std::vector<uint32_t>> order(m, std::vector<uint32_t>(n));
  for (size_t f = 0; f < m; ++f) {
    std::iota(order[f].begin(), order[f].end(), 0u);
    std::stable_sort(order[f].begin(), order[f].end(),
                     [&](uint32_t a, uint32_t b) { return x(a, f) < x(b, f); });
  }

  TreeEnsemble model;
  model.params = params;
  model.n_features = m;
  Rng rng(mix_seed(params.seed, 0x6bd7));

  std::vector<double> pred(n, params.base_score);
  std::vector<long double> pred_wide(n, params.base_score);
  std::vector<double> eval_pred(eval.x ? eval.x->rows() : 0, params.base_score);
  std::vector<double> grad(n);
  std::vector<int> node_of(n);
  std::vector<size_t> all_features(m);
  std::iota(all_features.begin(), all_features.end(), size_t{0});
  double best_eval = INFINITY;
  int best_round = -1;

  for (int round = 0; round < params.n_rounds; ++round) {
    for (size_t i = 0; i < n; ++i) grad[i] = pred[i] - y[i];
    for (size_t i = 0; i < n; ++i)
      node_of[i] = (params.subsample >= 1.0 || rng.uniform() < params.subsample) ? 0 : -1;
    const auto tree_features = sample_features(all_features, params.colsample_bytree, rng);

    Tree tree;
    std::vector<NodeStats> stats(1);
    for (size_t i = 0; i < n; ++i)
      if (node_of[i] == 0) {
        stats[0].g += grad[i];
        stats[0].h += 1.0;
      }
    tree.nodes.emplace_back();
    tree.nodes[0].cover = stats[0].h;
    std::vector<int> frontier{0};

    for (int depth = 0; depth < params.max_depth && !frontier.empty(); ++depth) {
      const auto level_features = sample_features(tree_features, params.colsample_bylevel, rng);
      std::vector<int> slot_of(tree.nodes.size(), -1);
      for (size_t s = 0; s < frontier.size(); ++s) slot_of[static_cast<size_t>(frontier[s])] = static_cast<int>(s);
      std::vector<Candidate> best(frontier.size());

      struct Scan {
        double gl = 0.0;
        double hl = 0.0;
        double last = 0.0;
        bool seen = false;
      };
      std::vector<Scan> scan(frontier.size());
      for (size_t f : level_features) {
        std::fill(scan.begin(), scan.end(), Scan{});
        for (uint32_t i : order[f]) {
          const int nd = node_of[i];
          if (nd < 0) continue;
          const int s = slot_of[static_cast<size_t>(nd)];
          if (s < 0) continue;
          auto& st = scan[static_cast<size_t>(s)];
          const double v = x(i, f);
          if (st.seen && v > st.last) {
            const auto& tot = stats[static_cast<size_t>(nd)];
            const double hr = tot.h - st.hl;
            if (st.hl >= params.min_child_weight && hr >= params.min_child_weight) {
              const double gain =
                  split_gain(st.gl, st.hl, tot.g - st.gl, hr, params.lambda, params.gamma);
              auto& b = best[static_cast<size_t>(s)];
              if (b.feature < 0 ? gain > 0.0 : gain > b.gain + kGainTie * std::max(1.0, std::abs(b.gain))) {
                b.gain = gain;
                b.feature = static_cast<int>(f);
                b.threshold = midpoint(st.last, v);
              }
            }
          }
          st.gl += grad[i];
          st.hl += 1.0;
          st.last = v;
          st.seen = true;
        }
      }

      std::vector<int> next;
      std::vector<int> left_of(tree.nodes.size(), -1);
      for (size_t s = 0; s < frontier.size(); ++s) {
        const auto& b = best[s];
        if (b.feature < 0) continue;
        const int id = frontier[s];
        const int left = static_cast<int>(tree.nodes.size());
        tree.nodes.emplace_back();
        tree.nodes.emplace_back();
        stats.resize(tree.nodes.size());
        auto& node = tree.nodes[static_cast<size_t>(id)];
        node.feature = b.feature;
        node.threshold = b.threshold;
        node.gain = b.gain;
        node.left = left;
        node.right = left + 1;
        left_of[static_cast<size_t>(id)] = left;
        next.push_back(left);
        next.push_back(left + 1);
      }
      for (size_t i = 0; i < n; ++i) {
        const int nd = node_of[i];
        if (nd < 0 || static_cast<size_t>(nd) >= left_of.size() || left_of[static_cast<size_t>(nd)] < 0)
          continue;
        const auto& node = tree.nodes[static_cast<size_t>(nd)];
        const int child = x(i, static_cast<size_t>(node.feature)) < node.threshold ? node.left : node.right;
        node_of[i] = child;
        stats[static_cast<size_t>(child)].g += grad[i];
        stats[static_cast<size_t>(child)].h += 1.0;
      }
      for (int c : next) tree.nodes[static_cast<size_t>(c)].cover = stats[static_cast<size_t>(c)].h;
      frontier = std::move(next);
    }

    for (size_t id = 0; id < tree.nodes.size(); ++id) {
      auto& node = tree.nodes[id];
      if (node.is_leaf())
        node.weight = leaf_weight(stats[id].g, stats[id].h, params.alpha, params.lambda,
                                  params.max_delta_step);
    }

    for (size_t i = 0; i < n; ++i) {
      const double w = tree.predict(x.row(i));
      pred[i] += params.learning_rate * w;
      pred_wide[i] += static_cast<long double>(params.learning_rate) * w;
    }
    model.train_rmse.push_back(rmse_of(std::span<const long double>(pred_wide), y));
    if (eval.x != nullptr) {
      for (size_t i = 0; i < eval_pred.size(); ++i)
        eval_pred[i] += params.learning_rate * tree.predict(eval.x->row(i));
      const double score = rmse_of(eval_pred, eval.y);
      model.eval_rmse.push_back(score);
      if (score < best_eval) {
        best_eval = score;
        best_round = round;
      }
    }
    model.trees.push_back(std::move(tree));

    if (params.early_stopping_rounds > 0 && round - best_round >= params.early_stopping_rounds) {
      model.trees.resize(static_cast<size_t>(best_round + 1));
      model.best_iteration = best_round;
      break;
    }
  }
  return model;
}

nlohmann::json TreeEnsemble::to_json() const {
  nlohmann::json trees_json = nlohmann::json::array();
  for (const auto& tree : trees) {
    nlohmann::json nodes = nlohmann::json::array();
    for (const auto& n : tree.nodes)
      nodes.push_back({n.feature, n.threshold, n.left, n.right, n.weight, n.cover, n.gain});
    trees_json.push_back(std::move(nodes));
  }
  return {{"format", "rf_forge.gbdt"},
          {"version", kFormatVersion},
          {"params", rfforge::to_json(params)},
          {"n_features", n_features},
          {"best_iteration", best_iteration},
          {"train_rmse", train_rmse},
          {"eval_rmse", eval_rmse},
          {"node_fields", {"feature", "threshold", "left", "right", "weight", "cover", "gain"}},
          {"trees", trees_json}};
}

TreeEnsemble TreeEnsemble::from_json(const nlohmann::json& doc) {
  TreeEnsemble model;
  try {
    require(doc.at("format") == "rf_forge.gbdt", ErrorKind::kData, "not a gbdt model document");
    require(doc.at("version").get<int>() == kFormatVersion, ErrorKind::kData,
            "unsupported gbdt model version");
    model.params = gbdt_params_from_json(doc.at("params"));
    model.n_features = doc.at("n_features").get<size_t>();
    model.best_iteration = doc.at("best_iteration").get<int>();
    model.train_rmse = doc.at("train_rmse").get<std::vector<double>>();
    model.eval_rmse = doc.at("eval_rmse").get<std::vector<double>>();
    for (const auto& nodes : doc.at("trees")) {
      Tree tree;
      for (const auto& a : nodes) {
        TreeNode n;
        n.feature = a.at(0).get<int>();
        n.threshold = a.at(1).get<double>();
        n.left = a.at(2).get<int>();
        n.right = a.at(3).get<int>();
        n.weight = a.at(4).get<double>();
        n.cover = a.at(5).get<double>();
        n.gain = a.at(6).get<double>();
        tree.nodes.push_back(n);
      }
      const int count = static_cast<int>(tree.nodes.size());
      for (const auto& n : tree.nodes)
        if (!n.is_leaf())
          require(n.feature < static_cast<int>(model.n_features) && n.left > 0 && n.left < count &&
                      n.right > 0 && n.right < count,
                  ErrorKind::kData, "gbdt model has a dangling node reference");
      require(count > 0, ErrorKind::kData, "gbdt model has an empty tree");
      model.trees.push_back(std::move(tree));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kData, std::string("malformed gbdt model document: ") + e.what());
  }
  return model;
}

}  // namespace rfforge
