#pragma once

// Random forest of CART trees for binary classification.
//
// Splits minimize weighted Gini impurity over floor(sqrt(n_features)) features
// drawn per node; thresholds are midpoints between consecutive distinct
// values and x <= threshold goes left. Leaves hold the class-1 fraction of the
// (bootstrap) samples that reach them; the forest averages leaf values.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lscg/errors.hpp"
#include "lscg/rng.hpp"

namespace lscg::focusnet {

struct ForestConfig {
  int n_trees = 200;
  int max_depth = 10;
  int min_samples_leaf = 3;
  int max_features = 0;  // 0: floor(sqrt(n_features))
  bool bootstrap = true;
  std::uint64_t seed = 17;
};

struct TreeNode {
  int feature_index = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double leaf_probability = 0.0;

  bool operator==(const TreeNode&) const = default;
};

struct DecisionTree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  double predict(const double* x) const {
    int i = 0;
    while (nodes[static_cast<std::size_t>(i)].feature_index >= 0) {
      const auto& n = nodes[static_cast<std::size_t>(i)];
      i = x[n.feature_index] <= n.threshold ? n.left : n.right;
    }
    return nodes[static_cast<std::size_t>(i)].leaf_probability;
  }
  int depth() const {
    std::vector<int> d(nodes.size(), 0);
    int best = 0;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      best = std::max(best, d[i]);
      if (nodes[i].feature_index >= 0) {
        d[static_cast<std::size_t>(nodes[i].left)] = d[i] + 1;
        d[static_cast<std::size_t>(nodes[i].right)] = d[i] + 1;
      }
    }
    return best;
  }
  bool operator==(const DecisionTree&) const = default;
};

struct ForestModel {
  std::vector<DecisionTree> trees;
  int n_features = 0;

  /// Mean of tree leaf probabilities; always in [0, 1].
  double predict_proba(const double* x) const {
    double s = 0.0;
    for (const auto& t : trees) s += t.predict(x);
    return s / static_cast<double>(trees.size());
  }
  double predict_proba(const std::vector<double>& x) const {
    if (static_cast<int>(x.size()) != n_features)
      throw std::invalid_argument("forest: feature length " + std::to_string(x.size()) + " != " +
                                  std::to_string(n_features));
    return predict_proba(x.data());
  }
  bool operator==(const ForestModel&) const = default;
};

/// Row-major feature table.
struct FeatureTable {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;
  std::vector<int> labels;

  const double* row(std::size_t r) const { return values.data() + r * cols; }
  void push(const std::vector<double>& x, int label) {
    if (rows == 0 && cols == 0) cols = x.size();
    if (x.size() != cols) throw std::invalid_argument("feature table: inconsistent row length");
    values.insert(values.end(), x.begin(), x.end());
    labels.push_back(label);
    ++rows;
  }
};

namespace detail {

class TreeBuilder {
 public:
  TreeBuilder(const FeatureTable& data, const ForestConfig& cfg, int mtry, Rng& rng)
      : data_(data), cfg_(cfg), mtry_(mtry), rng_(rng) {}

  DecisionTree build(std::vector<std::size_t> sample) {
    tree_.nodes.clear();
    grow(std::move(sample), 0);
    return std::move(tree_);
  }

 private:
  struct Split {
    int feature = -1;
    double threshold = 0.0;
    double impurity = 0.0;
  };

  static double gini(double pos, double n) {
    if (n <= 0) return 0.0;
    double p = pos / n;
    return 2.0 * p * (1.0 - p);
  }

  int grow(std::vector<std::size_t> sample, int depth) {
    int id = static_cast<int>(tree_.nodes.size());
    tree_.nodes.emplace_back();
    double pos = 0;
    for (auto i : sample) pos += data_.labels[i];
    const double n = static_cast<double>(sample.size());
    tree_.nodes[static_cast<std::size_t>(id)].leaf_probability = pos / n;
    const bool pure = pos == 0 || pos == n;
    if (pure || depth >= cfg_.max_depth || sample.size() < 2 * static_cast<std::size_t>(cfg_.min_samples_leaf))
      return id;
    Split best = find_split(sample, pos);
    if (best.feature < 0) return id;

    std::vector<std::size_t> left, right;
    for (auto i : sample) (data_.row(i)[best.feature] <= best.threshold ? left : right).push_back(i);
    sample.clear();
    sample.shrink_to_fit();
    int l = grow(std::move(left), depth + 1);
    int r = grow(std::move(right), depth + 1);
    auto& node = tree_.nodes[static_cast<std::size_t>(id)];
    node.feature_index = best.feature;
    node.threshold = best.threshold;
    node.left = l;
    node.right = r;
    return id;
  }

  Split find_split(const std::vector<std::size_t>& sample, double pos_total) {
    const double n = static_cast<double>(sample.size());
    const double parent = gini(pos_total, n);
    const std::size_t min_leaf = static_cast<std::size_t>(cfg_.min_samples_leaf);
    Split best;
    best.impurity = parent - 1e-12;
    auto features = rng_.sample_indices(data_.cols, static_cast<std::size_t>(mtry_));
    std::vector<std::pair<double, int>> col(sample.size());
    for (auto f : features) {
      for (std::size_t k = 0; k < sample.size(); ++k)
        col[k] = {data_.row(sample[k])[f], data_.labels[sample[k]]};
      std::sort(col.begin(), col.end());
      double left_pos = 0;
      for (std::size_t k = 0; k + 1 < col.size(); ++k) {
        left_pos += col[k].second;
        const std::size_t nl = k + 1;
        if (col[k].first == col[k + 1].first) continue;
        if (nl < min_leaf || col.size() - nl < min_leaf) continue;
        const double dl = static_cast<double>(nl), dr = n - dl;
        double imp = (dl * gini(left_pos, dl) + dr * gini(pos_total - left_pos, dr)) / n;
        if (imp < best.impurity) {
          best.impurity = imp;
          best.feature = static_cast<int>(f);
          best.threshold = col[k].first + (col[k + 1].first - col[k].first) / 2.0;
          // guard against the midpoint rounding onto the upper value
          if (!(best.threshold < col[k + 1].first)) best.threshold = col[k].first;
        }
      }
    }
    return best;
  }

  const FeatureTable& data_;
  const ForestConfig& cfg_;
  int mtry_;
  Rng& rng_;
  DecisionTree tree_;
};

}  // namespace detail

inline int effective_mtry(const ForestConfig& cfg, std::size_t n_features) {
  int m = cfg.max_features > 0 ? cfg.max_features
                               : static_cast<int>(std::floor(std::sqrt(static_cast<double>(n_features))));
  return std::clamp(m, 1, static_cast<int>(n_features));
}

/// Tree t is grown from its own stream derive_seed(cfg.seed, t).
inline ForestModel train_forest(const FeatureTable& data, const ForestConfig& cfg) {
  if (data.rows == 0 || data.cols == 0) throw std::invalid_argument("train_forest: empty feature table");
  if (cfg.n_trees < 1 || cfg.max_depth < 0 || cfg.min_samples_leaf < 1)
    throw std::invalid_argument("train_forest: invalid config");
  bool has0 = false, has1 = false;
  for (int l : data.labels) {
    if (l != 0 && l != 1) throw std::invalid_argument("train_forest: labels must be 0/1");
    (l ? has1 : has0) = true;
  }
  if (!has0 || !has1) throw std::invalid_argument("train_forest: need both classes, got one");

  ForestModel model;
  model.n_features = static_cast<int>(data.cols);
  const int mtry = effective_mtry(cfg, data.cols);
  for (int t = 0; t < cfg.n_trees; ++t) {
    Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(t)));
    std::vector<std::size_t> sample(data.rows);
    for (std::size_t i = 0; i < data.rows; ++i) sample[i] = cfg.bootstrap ? rng.index(data.rows) : i;
    detail::TreeBuilder b(data, cfg, mtry, rng);
    model.trees.push_back(b.build(std::move(sample)));
  }
  return model;
}

inline double accuracy(const ForestModel& m, const FeatureTable& data, double threshold = 0.5) {
  if (data.rows == 0) return 0.0;
  std::size_t ok = 0;
  for (std::size_t r = 0; r < data.rows; ++r)
    ok += ((m.predict_proba(data.row(r)) >= threshold) ? 1 : 0) == data.labels[r];
  return static_cast<double>(ok) / static_cast<double>(data.rows);
}

// ---------------------------------------------------------------- JSON

inline nlohmann::ordered_json node_to_json(const DecisionTree& t, int i) {
  const auto& n = t.nodes[static_cast<std::size_t>(i)];
  nlohmann::ordered_json j;
  j["feature_index"] = n.feature_index;
  j["threshold"] = n.threshold;
  j["left"] = n.feature_index >= 0 ? node_to_json(t, n.left) : nlohmann::ordered_json(nullptr);
  j["right"] = n.feature_index >= 0 ? node_to_json(t, n.right) : nlohmann::ordered_json(nullptr);
  j["leaf_probability"] = n.leaf_probability;
  return j;
}

/// A JSON list with one recursive root node per tree.
inline nlohmann::ordered_json to_json(const ForestModel& m) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& t : m.trees) arr.push_back(node_to_json(t, 0));
  return arr;
}

namespace detail {
inline int node_from_json(const nlohmann::json& j, DecisionTree& t, int n_features) {
  int id = static_cast<int>(t.nodes.size());
  t.nodes.emplace_back();
  TreeNode n;
  n.feature_index = j.at("feature_index").get<int>();
  n.threshold = j.at("threshold").get<double>();
  n.leaf_probability = j.at("leaf_probability").get<double>();
  if (!(n.leaf_probability >= 0.0 && n.leaf_probability <= 1.0))
    throw IntegrityError("forest: leaf probability outside [0,1]");
  if (n.feature_index >= 0) {
    if (n.feature_index >= n_features)
      throw IntegrityError("forest: split feature " + std::to_string(n.feature_index) +
                           " outside [0, " + std::to_string(n_features) + ")");
    n.left = node_from_json(j.at("left"), t, n_features);
    n.right = node_from_json(j.at("right"), t, n_features);
  } else if (n.feature_index != -1) {
    throw IntegrityError("forest: bad feature index");
  }
  t.nodes[static_cast<std::size_t>(id)] = n;
  return id;
}
}  // namespace detail

inline ForestModel forest_from_json(const nlohmann::json& j, int n_features) {
  if (!j.is_array() || j.empty()) throw IntegrityError("forest: expected a non-empty list of trees");
  ForestModel m;
  m.n_features = n_features;
  try {
    for (const auto& root : j) {
      DecisionTree t;
      detail::node_from_json(root, t, n_features);
      m.trees.push_back(std::move(t));
    }
  } catch (const nlohmann::json::exception& e) {
    throw IntegrityError(std::string("malformed forest: ") + e.what());
  }
  return m;
}

inline void save_forest(const std::filesystem::path& file, const ForestModel& m) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + file.string());
  out << to_json(m).dump() << '\n';
}

inline ForestModel load_forest(const std::filesystem::path& file, int n_features) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw DataError("cannot open " + file.string());
  auto j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) throw IntegrityError(file.string() + " is not valid JSON");
  return forest_from_json(j, n_features);
}

}  // namespace lscg::focusnet
