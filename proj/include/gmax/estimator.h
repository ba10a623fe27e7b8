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

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gmax/core.h"

namespace gmax {

// Scheduler-visible stand-in for the prompt: everything the request analyzer
// may condition a length prediction on.
struct FeatureVector {
  int input_len = 1;
  std::string app_tag;
  int generated_so_far = 0;
  int stage_index = 0;
  int model_id = 0;
};

FeatureVector features_of(const Request& req);

struct TrainingSample {
  FeatureVector features;
  int target = 1;  // true total output length
};

struct ForestParams {
  int n_trees = 50;
  int max_depth = 12;
  int min_leaf = 5;
  double feature_subsample = 0.6;  // fraction of features tried per split
  std::uint64_t seed = 0;
};

// Upper bound on the *total* response length, valid as of `as_of_generated`.
struct LengthBound {
  double total_upper = 0.0;
  double q = 0.95;
  int as_of_generated = 0;
};

// Weighted empirical quantile with linear interpolation between order
// statistics. With equal weights this is the usual "type 7" estimator.
// Pairs are (value, weight); the input must be nonempty.
double weighted_quantile(std::vector<std::pair<double, double>> value_weight, double q);

// Meinshausen-style quantile regression forest. Each leaf keeps the raw
// training targets routed to it; a prediction pools the leaves reached in
// every tree with equal tree weights.
class QuantileForest {
 public:
  struct Node {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    int leaf_begin = 0;  // range into Tree::targets
    int leaf_end = 0;
  };
  struct Tree {
    std::vector<Node> nodes;
    std::vector<int> targets;  // leaf multisets, each range sorted
  };

  QuantileForest() = default;

  bool fitted() const { return !trees_.empty(); }
  const ForestParams& params() const { return params_; }
  const std::vector<Tree>& trees() const { return trees_; }
  const std::vector<std::string>& app_vocab() const { return app_vocab_; }
  int n_models() const { return n_models_; }
  int n_features() const;

  // q-quantile of the pooled leaf distribution, unclamped. q in (0, 1].
  double quantile(const FeatureVector& x, double q) const;

  std::vector<double> encode(const FeatureVector& x) const;

  std::string to_json() const;
  static QuantileForest from_json(const std::string& text);
  void save(const std::string& path) const;
  static QuantileForest load(const std::string& path);

 private:
  friend QuantileForest fit_forest(std::span<const TrainingSample>, const ForestParams&);

  ForestParams params_;
  std::vector<std::string> app_vocab_;
  int n_models_ = 0;
  std::vector<Tree> trees_;
};

// Requires dataset.size() >= 10 * min_leaf (kInsufficientData otherwise).
QuantileForest fit_forest(std::span<const TrainingSample> dataset, const ForestParams& params);

// Throws kNotFitted on an empty forest and kInvalidArgument for q outside
// (0, 1). The bound is clamped below by the tokens already generated.
LengthBound predict_upper(const QuantileForest& forest, const FeatureVector& features, double q);

// Re-predicts once `generated` has advanced by at least `refine_interval`
// tokens past the current bound's anchor; otherwise returns `current`.
LengthBound refine(const QuantileForest& forest, const FeatureVector& features,
                   const LengthBound& current, int refine_interval = 50);
LengthBound refine(const QuantileForest& forest, const Request& req,
                   const LengthBound& current, int refine_interval = 50);

// Training rows for one completed response: the same request observed at
// generated_so_far = 0, k, 2k, ..., 5k and then doubling, while still running.
void append_training_rows(const FeatureVector& base, int true_output_len,
                          int refine_interval, std::vector<TrainingSample>& out);

}  // namespace gmax
