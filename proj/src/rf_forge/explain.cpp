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

#include "rf_forge/explain.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "rf_forge/rng.hpp"
#include "rf_forge/stats.hpp"

namespace rfforge {

namespace {

struct PathElement {
  int feature = -1;
  double zero_fraction = 0.0;
  double one_fraction = 0.0;
  double pweight = 0.0;
};

void extend_path(std::vector<PathElement>& path, size_t depth, double zero, double one, int feature) {
  path[depth] = {feature, zero, one, depth == 0 ? 1.0 : 0.0};
  const double d1 = static_cast<double>(depth + 1);
  for (size_t i = depth; i-- > 0;) {
    path[i + 1].pweight += one * path[i].pweight * static_cast<double>(i + 1) / d1;
    path[i].pweight = zero * path[i].pweight * static_cast<double>(depth - i) / d1;
  }
}

void unwind_path(std::vector<PathElement>& path, size_t depth, size_t index) {
  const double one = path[index].one_fraction;
  const double zero = path[index].zero_fraction;
  const double d1 = static_cast<double>(depth + 1);
  double next = path[depth].pweight;
  for (size_t i = depth; i-- > 0;) {
    if (one != 0.0) {
      const double tmp = path[i].pweight;
      path[i].pweight = next * d1 / (static_cast<double>(i + 1) * one);
      next = tmp - path[i].pweight * zero * static_cast<double>(depth - i) / d1;
    } else {
      path[i].pweight = path[i].pweight * d1 / (zero * static_cast<double>(depth - i));
    }
  }
  for (size_t i = index; i < depth; ++i) {
    path[i].feature = path[i + 1].feature;
    path[i].zero_fraction = path[i + 1].zero_fraction;
    path[i].one_fraction = path[i + 1].one_fraction;
  }
}

double unwound_sum(const std::vector<PathElement>& path, size_t depth, size_t index) {
  const double one = path[index].one_fraction;
  const double zero = path[index].zero_fraction;
  const double d1 = static_cast<double>(depth + 1);
  double next = path[depth].pweight;
  double total = 0.0;
  for (size_t i = depth; i-- > 0;) {
    if (one != 0.0) {
      const double tmp = next * d1 / (static_cast<double>(i + 1) * one);
      total += tmp;
      next = path[i].pweight - tmp * zero * static_cast<double>(depth - i) / d1;
    } else if (zero != 0.0) {
      total += path[i].pweight / zero / (static_cast<double>(depth - i) / d1);
    }
  }
  return total;
}

struct TreeShapContext {
  const Tree& tree;
  const std::vector<double>& left_fraction;
  std::span<const double> row;
  double scale;
  std::span<double> phi;
};

void recurse(const TreeShapContext& ctx, size_t node, std::vector<PathElement> path, size_t depth,
             double zero, double one, int feature) {
  path.resize(depth + 1);
  extend_path(path, depth, zero, one, feature);
  const auto& n = ctx.tree.nodes[node];
  if (n.is_leaf()) {
    for (size_t i = 1; i <= depth; ++i) {
      const double w = unwound_sum(path, depth, i);
      const auto& el = path[i];
      ctx.phi[static_cast<size_t>(el.feature)] +=
          w * (el.one_fraction - el.zero_fraction) * n.weight * ctx.scale;
    }
    return;
  }
  const bool go_left = ctx.row[static_cast<size_t>(n.feature)] < n.threshold;
  const size_t hot = static_cast<size_t>(go_left ? n.left : n.right);
  const size_t cold = static_cast<size_t>(go_left ? n.right : n.left);
  const double left = ctx.left_fraction[node];
  const double hot_fraction = go_left ? left : 1.0 - left;
  const double cold_fraction = 1.0 - hot_fraction;

  double incoming_zero = 1.0;
  double incoming_one = 1.0;
  for (size_t k = 1; k <= depth; ++k) {
    if (path[k].feature == n.feature) {
      incoming_zero = path[k].zero_fraction;
      incoming_one = path[k].one_fraction;
      unwind_path(path, depth, k);
      --depth;
      break;
    }
  }
  recurse(ctx, hot, path, depth + 1, hot_fraction * incoming_zero, incoming_one, n.feature);
  if (cold_fraction * incoming_zero > 0.0)
    recurse(ctx, cold, path, depth + 1, cold_fraction * incoming_zero, 0.0, n.feature);
}

double expected_value(const Tree& tree, const std::vector<double>& left_fraction, size_t node) {
  const auto& n = tree.nodes[node];
  if (n.is_leaf()) return n.weight;
  const double left = left_fraction[node];
  double out = 0.0;
  if (left > 0.0) out += left * expected_value(tree, left_fraction, static_cast<size_t>(n.left));
  if (left < 1.0) out += (1.0 - left) * expected_value(tree, left_fraction, static_cast<size_t>(n.right));
  return out;
}

double shapley_weight(size_t m, size_t s) {
  // s! (m - s - 1)! / m!
  return std::exp(std::lgamma(static_cast<double>(s + 1)) +
                  std::lgamma(static_cast<double>(m - s)) - std::lgamma(static_cast<double>(m + 1)));
}

std::string mask_label(const std::vector<uint8_t>& mask) {
  std::string out = "{";
  for (size_t j = 0; j < mask.size(); ++j)
    if (mask[j]) out += (out.size() > 1 ? "," : "") + std::to_string(j);
  return out + "}";
}

// Mean prediction over the background with the features in `mask` taken from row.
class CoalitionValue {
 public:
  CoalitionValue(const PredictFn& predict, const Matrix& background)
      : predict_(predict), background_(background), batch_(background.rows(), background.cols()) {}

  double operator()(std::span<const double> row, const std::vector<uint8_t>& mask) {
    for (size_t b = 0; b < background_.rows(); ++b)
      for (size_t j = 0; j < row.size(); ++j) batch_(b, j) = mask[j] ? row[j] : background_(b, j);
    std::vector<double> out;
    try {
      out = predict_(batch_);
    } catch (const Error& e) {
      throw Error(e.kind(), std::string(e.what()) + " (while evaluating coalition " + mask_label(mask) + ")");
    }
    require(out.size() == background_.rows(), ErrorKind::kShape,
            "predictor returned the wrong number of values for coalition " + mask_label(mask));
    return stats::mean(out);
  }

 private:
  const PredictFn& predict_;
  const Matrix& background_;
  Matrix batch_;
};

std::optional<double> correlation(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2) return std::nullopt;
  const double ma = stats::mean(a);
  const double mb = stats::mean(b);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return std::nullopt;
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

void rank(ImportanceSummary& summary) {
  std::stable_sort(summary.ranked.begin(), summary.ranked.end(),
                   [](const FeatureImportance& a, const FeatureImportance& b) { return a.score > b.score; });
  for (size_t i = 0; i < summary.ranked.size(); ++i) summary.ranked[i].rank = i + 1;
}

}  // namespace

std::vector<std::vector<double>> background_left_fractions(const TreeEnsemble& model,
                                                           const Matrix& background) {
  require(background.cols() == model.n_features, ErrorKind::kShape,
          "background has " + std::to_string(background.cols()) + " features, model expects " +
              std::to_string(model.n_features));
  std::vector<std::vector<double>> out;
  out.reserve(model.trees.size());
  for (const auto& tree : model.trees) {
    std::vector<double> count(tree.nodes.size(), 0.0);
    for (size_t r = 0; r < background.rows(); ++r) {
      const auto row = background.row(r);
      size_t at = 0;
      count[at] += 1.0;
      while (!tree.nodes[at].is_leaf()) {
        const auto& n = tree.nodes[at];
        at = static_cast<size_t>(row[static_cast<size_t>(n.feature)] < n.threshold ? n.left : n.right);
        count[at] += 1.0;
      }
    }
    std::vector<double> left(tree.nodes.size(), 0.0);
    for (size_t id = 0; id < tree.nodes.size(); ++id) {
      const auto& n = tree.nodes[id];
      if (n.is_leaf()) continue;
      const auto l = static_cast<size_t>(n.left);
      const auto r = static_cast<size_t>(n.right);
      if (count[id] > 0.0) left[id] = count[l] / count[id];
      else if (tree.nodes[l].cover + tree.nodes[r].cover > 0.0)
        left[id] = tree.nodes[l].cover / (tree.nodes[l].cover + tree.nodes[r].cover);
      else left[id] = 0.5;
    }
    out.push_back(std::move(left));
  }
  return out;
}

Attribution tree_shap(const TreeEnsemble& model, const Matrix& x, const Matrix& background) {
  require(x.cols() == model.n_features, ErrorKind::kShape,
          "explained rows have " + std::to_string(x.cols()) + " features, model expects " +
              std::to_string(model.n_features));
  require(background.rows() > 0, ErrorKind::kArgument, "tree shap needs a nonempty background");
  const auto fractions = background_left_fractions(model, background);

  Attribution attr;
  attr.method = "tree_shap";
  attr.background_rows = background.rows();
  attr.values = Matrix(x.rows(), x.cols());
  double base = model.params.base_score;
  for (size_t t = 0; t < model.trees.size(); ++t)
    base += model.params.learning_rate * expected_value(model.trees[t], fractions[t], 0);
  attr.base_value = base;

  for (size_t r = 0; r < x.rows(); ++r) {
    auto phi = attr.values.row(r);
    for (size_t t = 0; t < model.trees.size(); ++t) {
      TreeShapContext ctx{model.trees[t], fractions[t], x.row(r), model.params.learning_rate, phi};
      recurse(ctx, 0, {}, 0, 1.0, 1.0, -1);
    }
  }
  return attr;
}

Attribution kernel_shap(const PredictFn& predict, const Matrix& background, const Matrix& x,
                        const KernelShapOptions& options) {
  require(background.rows() > 0, ErrorKind::kArgument, "kernel shap needs a nonempty background");
  require(background.cols() == x.cols(), ErrorKind::kShape,
          "background and explained rows differ in feature count");
  const size_t m = x.cols();
  require(m >= 1, ErrorKind::kArgument, "kernel shap needs at least one feature");
  require(options.n_coalitions >= 2 * m, ErrorKind::kArgument,
          "kernel shap needs at least " + std::to_string(2 * m) + " coalitions");

  CoalitionValue value(predict, background);
  Attribution attr;
  attr.background_rows = background.rows();
  attr.values = Matrix(x.rows(), m);
  {
    const std::vector<double> base_pred = predict(background);
    require(base_pred.size() == background.rows(), ErrorKind::kShape,
            "predictor returned the wrong number of values for the background");
    attr.base_value = stats::mean(base_pred);
  }

  if (m <= options.exact_max_features) {
    attr.method = "kernel_shap_exact";
    const size_t subsets = size_t{1} << m;
    std::vector<double> weight(m);
    for (size_t s = 0; s < m; ++s) weight[s] = shapley_weight(m, s);
    std::vector<double> v(subsets);
    std::vector<uint8_t> mask(m);
    for (size_t r = 0; r < x.rows(); ++r) {
      const auto row = x.row(r);
      for (size_t s = 0; s < subsets; ++s) {
        for (size_t j = 0; j < m; ++j) mask[j] = (s >> j) & 1u;
        v[s] = s == 0 ? attr.base_value : value(row, mask);
      }
      auto phi = attr.values.row(r);
      for (size_t j = 0; j < m; ++j) {
        const size_t bit = size_t{1} << j;
        double total = 0.0;
        for (size_t s = 0; s < subsets; ++s) {
          if (s & bit) continue;
          total += weight[static_cast<size_t>(__builtin_popcountll(s))] * (v[s | bit] - v[s]);
        }
        phi[j] = total;
      }
    }
    return attr;
  }

  attr.method = "kernel_shap_sampled";
  attr.variance.assign(m, 0.0);
  Rng rng(mix_seed(options.seed, 0x5ba9));
  // Coalition sizes 1..m-1 drawn with probability proportional to the Shapley
  // kernel mass of that size; complements are added in pairs.
  std::vector<double> size_mass(m, 0.0);
  for (size_t s = 1; s < m; ++s)
    size_mass[s] = static_cast<double>(m - 1) / static_cast<double>(s * (m - s));
  const double mass_total = std::accumulate(size_mass.begin(), size_mass.end(), 0.0);
  const size_t pairs = options.n_coalitions / 2;
  constexpr size_t kBatches = 4;

  for (size_t r = 0; r < x.rows(); ++r) {
    const auto row = x.row(r);
    const double full = value(row, std::vector<uint8_t>(m, 1));
    const double delta = full - attr.base_value;
    std::vector<std::vector<uint8_t>> masks;
    std::vector<double> vals;
    for (size_t p = 0; p < pairs; ++p) {
      double u = rng.uniform() * mass_total;
      size_t size = 1;
      while (size < m - 1 && u >= size_mass[size]) u -= size_mass[size++];
      std::vector<size_t> order(m);
      std::iota(order.begin(), order.end(), size_t{0});
      rng.shuffle(order);
      std::vector<uint8_t> mask(m, 0);
      for (size_t k = 0; k < size; ++k) mask[order[k]] = 1;
      std::vector<uint8_t> complement(m);
      for (size_t j = 0; j < m; ++j) complement[j] = 1 - mask[j];
      vals.push_back(value(row, mask));
      masks.push_back(mask);
      vals.push_back(value(row, complement));
      masks.push_back(std::move(complement));
    }

    auto solve = [&](size_t begin, size_t end) {
      const auto rows = static_cast<Eigen::Index>(end - begin);
      Eigen::MatrixXd a(rows, static_cast<Eigen::Index>(m - 1));
      Eigen::VectorXd b(rows);
      for (size_t k = begin; k < end; ++k) {
        const auto i = static_cast<Eigen::Index>(k - begin);
        const double last = masks[k][m - 1];
        for (size_t j = 0; j + 1 < m; ++j) a(i, static_cast<Eigen::Index>(j)) = masks[k][j] - last;
        b(i) = vals[k] - attr.base_value - last * delta;
      }
      const Eigen::VectorXd head = a.colPivHouseholderQr().solve(b);
      std::vector<double> phi(m);
      double sum = 0.0;
      for (size_t j = 0; j + 1 < m; ++j) {
        phi[j] = head(static_cast<Eigen::Index>(j));
        sum += phi[j];
      }
      phi[m - 1] = delta - sum;
      return phi;
    };

    const auto phi = solve(0, masks.size());
    auto out = attr.values.row(r);
    std::copy(phi.begin(), phi.end(), out.begin());
    const size_t per_batch = (pairs / kBatches) * 2;
    if (per_batch >= m) {
      std::vector<std::vector<double>> parts;
      for (size_t bt = 0; bt < kBatches; ++bt) parts.push_back(solve(bt * per_batch, (bt + 1) * per_batch));
      for (size_t j = 0; j < m; ++j) {
        std::vector<double> col;
        for (const auto& part : parts) col.push_back(part[j]);
        attr.variance[j] += stats::variance(col) / static_cast<double>(kBatches) /
                            static_cast<double>(x.rows());
      }
    }
  }
  return attr;
}

ImportanceSummary summarize(const Attribution& attr, const Matrix& x,
                            const std::vector<std::string>& names) {
  require(attr.values.rows() > 0, ErrorKind::kArgument, "cannot summarize an empty attribution");
  require(names.size() == attr.values.cols() && x.cols() == attr.values.cols() &&
              x.rows() == attr.values.rows(),
          ErrorKind::kShape, "attribution, feature values and names disagree in shape");
  ImportanceSummary summary;
  summary.method = attr.method;
  for (size_t j = 0; j < names.size(); ++j) {
    std::vector<double> shap(attr.values.rows()), feature(attr.values.rows());
    double total = 0.0;
    for (size_t r = 0; r < attr.values.rows(); ++r) {
      shap[r] = attr.values(r, j);
      feature[r] = x(r, j);
      total += std::abs(shap[r]);
    }
    FeatureImportance fi;
    fi.feature = names[j];
    fi.column = j;
    fi.score = total / static_cast<double>(attr.values.rows());
    fi.sign = correlation(feature, shap);
    summary.ranked.push_back(std::move(fi));
  }
  rank(summary);
  return summary;
}

ImportanceSummary summarize(const LinearModel& model) {
  ImportanceSummary summary;
  summary.method = "mlr_coefficient";
  for (size_t j = 0; j < model.feature_names.size(); ++j) {
    FeatureImportance fi;
    fi.feature = model.feature_names[j];
    fi.column = j;
    fi.selected = false;
    if (const auto c = model.coefficient(fi.feature)) {
      fi.selected = true;
      fi.score = std::abs(*c);
      fi.sign = *c > 0.0 ? 1.0 : (*c < 0.0 ? -1.0 : 0.0);
    }
    summary.ranked.push_back(std::move(fi));
  }
  rank(summary);
  return summary;
}

std::string attribution_to_csv(const Attribution& attr, const std::vector<std::string>& names) {
  std::ostringstream out;
  out << "sample,base_value";
  for (const auto& n : names) out << ',' << n;
  out << '\n';
  for (size_t r = 0; r < attr.values.rows(); ++r) {
    out << r << ',' << stats::format_double(attr.base_value);
    for (size_t j = 0; j < attr.values.cols(); ++j) out << ',' << stats::format_double(attr.values(r, j));
    out << '\n';
  }
  return out.str();
}

std::string summary_to_csv(const ImportanceSummary& summary) {
  std::ostringstream out;
  out << "rank,feature,column,score,sign,selected\n";
  for (const auto& f : summary.ranked)
    out << f.rank << ',' << f.feature << ',' << f.column << ',' << stats::format_double(f.score) << ','
        << (f.sign ? stats::format_double(*f.sign) : std::string()) << ',' << (f.selected ? 1 : 0) << '\n';
  return out.str();
}

nlohmann::json to_json(const ImportanceSummary& summary) {
  nlohmann::json ranked = nlohmann::json::array();
  for (const auto& f : summary.ranked)
    ranked.push_back({{"rank", f.rank},
                      {"feature", f.feature},
                      {"column", f.column},
                      {"score", f.score},
                      {"sign", f.sign ? nlohmann::json(*f.sign) : nlohmann::json(nullptr)},
                      {"selected", f.selected}});
  return {{"method", summary.method}, {"ranked", ranked}};
}

nlohmann::json to_json(const Attribution& attr, const std::vector<std::string>& names) {
  return {{"method", attr.method},
          {"base_value", attr.base_value},
          {"samples", attr.values.rows()},
          {"features", names},
          {"variance", attr.variance},
          {"background_rows", attr.background_rows},
          {"background", attr.background_label}};
}

}  // namespace rfforge
