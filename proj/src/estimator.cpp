/* Copyright 2026 The gmaxsim Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "gmax/estimator.h"

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

namespace gmax {

using nlohmann::json;

FeatureVector features_of(const Request& req) {
  FeatureVector f;
  f.input_len = req.input_len;
  f.app_tag = req.app_tag;
  f.generated_so_far = req.generated;
  return f;
}

double weighted_quantile(std::vector<std::pair<double, double>> vw, double q) {
  if (vw.empty()) throw Error(Errc::kInvalidArgument, "quantile of empty pool");
  std::sort(vw.begin(), vw.end());
  const size_t n = vw.size();
  if (n == 1) return vw[0].first;
  double total = 0.0;
  for (const auto& p : vw) total += p.second;
  // Position of the k-th order statistic: cumulative weight strictly before
  // it, normalised so the first sits at 0 and the last at 1.
  const double span = total - vw.back().second;
  if (!(span > 0.0)) return vw.back().first;
  q = std::clamp(q, 0.0, 1.0);
  double before = 0.0;
  for (size_t k = 0; k + 1 < n; ++k) {
    const double pos_k = before / span;
    const double pos_next = (before + vw[k].second) / span;
    if (q <= pos_next) {
      const double width = pos_next - pos_k;
      const double t = width > 0.0 ? (q - pos_k) / width : 1.0;
      return vw[k].first + t * (vw[k + 1].first - vw[k].first);
    }
    before += vw[k].second;
  }
  return vw.back().first;
}

int QuantileForest::n_features() const {
  return 3 + static_cast<int>(app_vocab_.size()) + n_models_;
}

std::vector<double> QuantileForest::encode(const FeatureVector& x) const {
  std::vector<double> out(n_features(), 0.0);
  out[0] = x.input_len;
  out[1] = x.generated_so_far;
  out[2] = x.stage_index;
  auto it = std::find(app_vocab_.begin(), app_vocab_.end(), x.app_tag);
  if (it != app_vocab_.end()) out[3 + (it - app_vocab_.begin())] = 1.0;
  if (x.model_id >= 0 && x.model_id < n_models_) {
    out[3 + app_vocab_.size() + x.model_id] = 1.0;
  }
  return out;
}

double QuantileForest::quantile(const FeatureVector& x, double q) const {
  if (!fitted()) throw Error(Errc::kNotFitted, "forest has no trees");
  const auto encoded = encode(x);
  struct Leaf {
    const int* begin;
    const int* end;
    double w;  // weight of each element
  };
  std::vector<Leaf> leaves;
  leaves.reserve(trees_.size());
  const double tree_weight = 1.0 / static_cast<double>(trees_.size());
  int lo = std::numeric_limits<int>::max();
  int hi = std::numeric_limits<int>::min();
  for (const auto& tree : trees_) {
    int at = 0;
    while (tree.nodes[at].feature >= 0) {
      const auto& node = tree.nodes[at];
      at = encoded[node.feature] <= node.threshold ? node.left : node.right;
    }
    const auto& leaf = tree.nodes[at];
    const int* base = tree.targets.data();
    leaves.push_back({base + leaf.leaf_begin, base + leaf.leaf_end,
                      tree_weight / static_cast<double>(leaf.leaf_end - leaf.leaf_begin)});
    lo = std::min(lo, leaves.back().begin[0]);
    hi = std::max(hi, leaves.back().end[-1]);
  }
  // Same value as weighted_quantile over the pooled (target, weight) pairs,
  // without materialising the pool. Leaf ranges are sorted, so the weight at
  // or below y costs one binary search per tree. Pairs sort by (value,
  // weight), so the last element of a tie group carries the largest weight.
  auto weight_upto = [&](int y) {
    double acc = 0.0;
    for (const auto& l : leaves) acc += l.w * static_cast<double>(std::upper_bound(l.begin, l.end, y) - l.begin);
    return acc;
  };
  auto heaviest_at = [&](int y) {
    double w = 0.0;
    for (const auto& l : leaves) {
      auto it = std::lower_bound(l.begin, l.end, y);
      if (it != l.end && *it == y) w = std::max(w, l.w);
    }
    return w;
  };
  const double total = weight_upto(hi);
  const double span = total - heaviest_at(hi);
  if (lo == hi || !(span > 0.0)) return static_cast<double>(hi);
  const double target = std::clamp(q, 0.0, 1.0) * span;
  // Smallest y whose group ends at or past the target position.
  int a = lo, b = hi;
  while (a < b) {
    const int mid = a + (b - a) / 2;
    if (weight_upto(mid) >= target) {
      b = mid;
    } else {
      a = mid + 1;
    }
  }
  const int y = a;
  if (y == hi) return static_cast<double>(hi);
  const double w_last = heaviest_at(y);
  const double last_start = weight_upto(y) - w_last;
  if (!(target > last_start)) return static_cast<double>(y);
  int next = std::numeric_limits<int>::max();
  for (const auto& l : leaves) {
    auto it = std::upper_bound(l.begin, l.end, y);
    if (it != l.end) next = std::min(next, *it);
  }
  const double t = (target - last_start) / w_last;
  return y + t * (next - y);
}

// ---------------------------------------------------------------------------
// Fitting
// ---------------------------------------------------------------------------

namespace {

constexpr int kMaxBins = 256;

// Features discretised once per fit: split search then runs on per-node
// histograms instead of re-sorting every node.
struct BinnedFeature {
  std::vector<std::uint16_t> bin;  // per row
  std::vector<double> split_at;    // threshold between bin b and b + 1
  int n_bins = 1;
};

BinnedFeature bin_feature(const std::vector<double>& col) {
  std::vector<double> sorted = col;
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> uniq = sorted;
  uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
  std::vector<double> edges;  // inclusive upper edge of each bin
  if (static_cast<int>(uniq.size()) <= kMaxBins) {
    edges = uniq;
  } else {
    const size_t n = sorted.size();
    for (int k = 1; k <= kMaxBins; ++k) {
      const double e = sorted[std::min(n - 1, k * n / kMaxBins - 1)];
      if (edges.empty() || e > edges.back()) edges.push_back(e);
    }
    if (edges.back() < uniq.back()) edges.push_back(uniq.back());
  }
  BinnedFeature out;
  out.n_bins = static_cast<int>(edges.size());
  for (size_t b = 0; b + 1 < edges.size(); ++b) {
    const double next = *std::upper_bound(uniq.begin(), uniq.end(), edges[b]);
    out.split_at.push_back(0.5 * (edges[b] + next));
  }
  out.bin.resize(col.size());
  for (size_t i = 0; i < col.size(); ++i) {
    out.bin[i] = static_cast<std::uint16_t>(std::lower_bound(edges.begin(), edges.end(), col[i]) -
                                            edges.begin());
  }
  return out;
}

class TreeBuilder {
 public:
  TreeBuilder(const std::vector<BinnedFeature>& features, const std::vector<int>& targets,
              const ForestParams& params, std::mt19937_64& rng)
      : features_(features), targets_(targets), params_(params), rng_(rng) {
    const int n_features = static_cast<int>(features_.size());
    mtry_ = std::clamp(static_cast<int>(std::lround(params_.feature_subsample * n_features)), 1,
                       n_features);
    feature_order_.resize(n_features);
    std::iota(feature_order_.begin(), feature_order_.end(), 0);
    count_.resize(kMaxBins + 1);
    sum_.resize(kMaxBins + 1);
  }

  QuantileForest::Tree build(std::vector<int> rows) {
    tree_ = {};
    grow(rows, 0);
    return std::move(tree_);
  }

 private:
  struct Split {
    int feature = -1;
    int bin = 0;
    double gain = 0.0;
  };

  int make_leaf(const std::vector<int>& rows) {
    QuantileForest::Node leaf;
    leaf.leaf_begin = static_cast<int>(tree_.targets.size());
    for (int r : rows) tree_.targets.push_back(targets_[r]);
    leaf.leaf_end = static_cast<int>(tree_.targets.size());
    std::sort(tree_.targets.begin() + leaf.leaf_begin, tree_.targets.end());
    tree_.nodes.push_back(leaf);
    return static_cast<int>(tree_.nodes.size()) - 1;
  }

  // Tries the first mtry features of a random order; when none of them can
  // split the node the remaining features are tried as well.
  Split best_split(const std::vector<int>& rows) {
    const int n = static_cast<int>(rows.size());
    const int min_leaf = params_.min_leaf;
    double total = 0.0;
    for (int r : rows) total += targets_[r];
    Split best;
    std::shuffle(feature_order_.begin(), feature_order_.end(), rng_);
    const int n_features = static_cast<int>(feature_order_.size());
    for (int k = 0; k < n_features; ++k) {
      if (k >= mtry_ && best.feature >= 0) break;
      const int f = feature_order_[k];
      const auto& feat = features_[f];
      if (feat.n_bins < 2) continue;
      std::fill(count_.begin(), count_.begin() + feat.n_bins, 0);
      std::fill(sum_.begin(), sum_.begin() + feat.n_bins, 0.0);
      for (int r : rows) {
        const int b = feat.bin[r];
        ++count_[b];
        sum_[b] += targets_[r];
      }
      int n_left = 0;
      double left_sum = 0.0;
      for (int b = 0; b + 1 < feat.n_bins; ++b) {
        n_left += count_[b];
        left_sum += sum_[b];
        const int n_right = n - n_left;
        if (n_left < min_leaf || count_[b] == 0) continue;
        if (n_right < min_leaf) break;
        const double right_sum = total - left_sum;
        // SSE reduction up to a constant: sum_l^2/n_l + sum_r^2/n_r.
        const double gain = left_sum * left_sum / n_left + right_sum * right_sum / n_right -
                            total * total / n;
        if (gain > best.gain + 1e-9) {
          best.feature = f;
          best.bin = b;
          best.gain = gain;
        }
      }
    }
    return best;
  }

  int grow(const std::vector<int>& rows, int depth) {
    const int n = static_cast<int>(rows.size());
    if (depth >= params_.max_depth || n < 2 * params_.min_leaf) return make_leaf(rows);
    Split split = best_split(rows);
    if (split.feature < 0) return make_leaf(rows);
    const auto& feat = features_[split.feature];
    std::vector<int> left, right;
    for (int r : rows) (feat.bin[r] <= split.bin ? left : right).push_back(r);
    const int id = static_cast<int>(tree_.nodes.size());
    tree_.nodes.push_back({split.feature, feat.split_at[split.bin], -1, -1, 0, 0});
    const int l = grow(left, depth + 1);
    const int r = grow(right, depth + 1);
    tree_.nodes[id].left = l;
    tree_.nodes[id].right = r;
    return id;
  }

  const std::vector<BinnedFeature>& features_;
  const std::vector<int>& targets_;
  const ForestParams& params_;
  std::mt19937_64& rng_;
  int mtry_ = 1;
  std::vector<int> feature_order_;
  std::vector<int> count_;
  std::vector<double> sum_;
  QuantileForest::Tree tree_;
};

}  // namespace

QuantileForest fit_forest(std::span<const TrainingSample> dataset, const ForestParams& params) {
  if (params.n_trees < 1 || params.max_depth < 0 || params.min_leaf < 1 ||
      !(params.feature_subsample > 0.0 && params.feature_subsample <= 1.0)) {
    throw Error(Errc::kInvalidArgument, "invalid forest parameters");
  }
  if (dataset.size() < static_cast<size_t>(10 * params.min_leaf)) {
    throw Error(Errc::kInsufficientData, "need at least 10 * min_leaf samples, got " +
                                             std::to_string(dataset.size()));
  }
  QuantileForest forest;
  forest.params_ = params;
  for (const auto& s : dataset) {
    if (s.target < 1 || s.features.input_len < 1 || s.features.generated_so_far < 0) {
      throw Error(Errc::kInvalidArgument, "training sample violates length invariants");
    }
    if (std::find(forest.app_vocab_.begin(), forest.app_vocab_.end(), s.features.app_tag) ==
        forest.app_vocab_.end()) {
      forest.app_vocab_.push_back(s.features.app_tag);
    }
    forest.n_models_ = std::max(forest.n_models_, s.features.model_id + 1);
  }
  std::sort(forest.app_vocab_.begin(), forest.app_vocab_.end());

  const size_t n = dataset.size();
  std::vector<std::vector<double>> columns(forest.n_features(), std::vector<double>(n));
  std::vector<int> targets(n);
  for (size_t i = 0; i < n; ++i) {
    auto row = forest.encode(dataset[i].features);
    for (size_t f = 0; f < row.size(); ++f) columns[f][i] = row[f];
    targets[i] = dataset[i].target;
  }

  std::vector<BinnedFeature> binned;
  binned.reserve(columns.size());
  for (const auto& col : columns) binned.push_back(bin_feature(col));

  std::mt19937_64 rng(params.seed);
  TreeBuilder builder(binned, targets, forest.params_, rng);
  forest.trees_.reserve(params.n_trees);
  std::uniform_int_distribution<size_t> pick(0, n - 1);
  for (int t = 0; t < params.n_trees; ++t) {
    std::vector<int> rows(n);
    for (auto& r : rows) r = static_cast<int>(pick(rng));
    forest.trees_.push_back(builder.build(std::move(rows)));
  }
  return forest;
}

LengthBound predict_upper(const QuantileForest& forest, const FeatureVector& features, double q) {
  if (!forest.fitted()) throw Error(Errc::kNotFitted, "predict on an unfitted forest");
  if (!(q > 0.0 && q < 1.0)) throw Error(Errc::kInvalidArgument, "q must lie in (0, 1)");
  LengthBound bound;
  bound.q = q;
  bound.as_of_generated = features.generated_so_far;
  bound.total_upper = std::max(forest.quantile(features, q),
                               static_cast<double>(features.generated_so_far));
  return bound;
}

LengthBound refine(const QuantileForest& forest, const FeatureVector& features,
                   const LengthBound& current, int refine_interval) {
  if (features.generated_so_far - current.as_of_generated < refine_interval) {
    LengthBound kept = current;
    kept.total_upper = std::max(kept.total_upper, static_cast<double>(features.generated_so_far));
    return kept;
  }
  return predict_upper(forest, features, current.q);
}

LengthBound refine(const QuantileForest& forest, const Request& req, const LengthBound& current,
                   int refine_interval) {
  return refine(forest, features_of(req), current, refine_interval);
}

void append_training_rows(const FeatureVector& base, int true_output_len, int refine_interval,
                          std::vector<TrainingSample>& out) {
  int g = 0;
  int round = 0;
  while (g < true_output_len) {
    TrainingSample s{base, true_output_len};
    s.features.generated_so_far = g;
    out.push_back(std::move(s));
    ++round;
    g = round <= 5 ? round * refine_interval : g * 2;
  }
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

std::string QuantileForest::to_json() const {
  json j;
  j["format"] = "gmax-qrf";
  j["version"] = 1;
  j["params"] = {{"n_trees", params_.n_trees},
                 {"max_depth", params_.max_depth},
                 {"min_leaf", params_.min_leaf},
                 {"feature_subsample", params_.feature_subsample},
                 {"seed", params_.seed}};
  j["app_vocab"] = app_vocab_;
  j["n_models"] = n_models_;
  json trees = json::array();
  for (const auto& tree : trees_) {
    json nodes = json::array();
    for (const auto& node : tree.nodes) {
      if (node.feature < 0) {
        nodes.push_back({{"leaf", std::vector<int>(tree.targets.begin() + node.leaf_begin,
                                                   tree.targets.begin() + node.leaf_end)}});
      } else {
        nodes.push_back({{"feature", node.feature},
                         {"threshold", node.threshold},
                         {"left", node.left},
                         {"right", node.right}});
      }
    }
    trees.push_back(std::move(nodes));
  }
  j["trees"] = std::move(trees);
  return j.dump();
}

QuantileForest QuantileForest::from_json(const std::string& text) {
  QuantileForest forest;
  try {
    json j = json::parse(text);
    if (j.at("format") != "gmax-qrf" || j.at("version") != 1) {
      throw Error(Errc::kSchemaMismatch, "not a version-1 gmax-qrf file");
    }
    const auto& p = j.at("params");
    forest.params_.n_trees = p.at("n_trees");
    forest.params_.max_depth = p.at("max_depth");
    forest.params_.min_leaf = p.at("min_leaf");
    forest.params_.feature_subsample = p.at("feature_subsample");
    forest.params_.seed = p.at("seed");
    forest.app_vocab_ = j.at("app_vocab").get<std::vector<std::string>>();
    forest.n_models_ = j.at("n_models");
    const int n_features = forest.n_features();
    for (const auto& jt : j.at("trees")) {
      Tree tree;
      for (const auto& jn : jt) {
        Node node;
        if (jn.contains("leaf")) {
          auto leaf = jn.at("leaf").get<std::vector<int>>();
          if (leaf.empty()) throw Error(Errc::kSchemaMismatch, "empty leaf");
          node.leaf_begin = static_cast<int>(tree.targets.size());
          tree.targets.insert(tree.targets.end(), leaf.begin(), leaf.end());
          node.leaf_end = static_cast<int>(tree.targets.size());
        } else {
          node.feature = jn.at("feature");
          node.threshold = jn.at("threshold");
          node.left = jn.at("left");
          node.right = jn.at("right");
          if (node.feature >= n_features) throw Error(Errc::kSchemaMismatch, "bad feature index");
        }
        tree.nodes.push_back(node);
      }
      const int n_nodes = static_cast<int>(tree.nodes.size());
      for (const auto& node : tree.nodes) {
        if (node.feature >= 0 && (node.left <= 0 || node.left >= n_nodes || node.right <= 0 ||
                                  node.right >= n_nodes)) {
          throw Error(Errc::kSchemaMismatch, "child index out of range");
        }
      }
      if (tree.nodes.empty()) throw Error(Errc::kSchemaMismatch, "empty tree");
      forest.trees_.push_back(std::move(tree));
    }
  } catch (const json::exception& e) {
    throw Error(Errc::kSchemaMismatch, e.what());
  }
  return forest;
}

void QuantileForest::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw Error(Errc::kIoError, "cannot write " + path);
  out << to_json() << '\n';
}

QuantileForest QuantileForest::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::kIoError, "cannot read " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return from_json(buf.str());
}

}  // namespace gmax
