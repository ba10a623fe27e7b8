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

#include "gmax/patterns.h"

#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "helpers.h"

namespace gmax {
namespace {

using testing::chain_graph;
using testing::llm_node;
using testing::tool_node;

PatternGraph chain(int out0, Seconds tool_t, int out1, std::vector<Seconds> times = {2.0, 1.0, 3.0}) {
  return make_pattern(chain_graph(100, out0, tool_t, 50, out1), times);
}

TEST(Shares, ModesOnKnownTimes) {
  const auto p = chain(10, 1.0, 10);  // times 2, 1, 3; total 6
  EXPECT_DOUBLE_EQ(p.total_time, 6.0);
  EXPECT_DOUBLE_EQ(stage_share(p, 0), 2.0 / 6.0);
  EXPECT_DOUBLE_EQ(stage_share(p, 1), 3.0 / 6.0);
  EXPECT_DOUBLE_EQ(stage_share(p, 2), 1.0);
  EXPECT_DOUBLE_EQ(share_for_mode(p, 1, ShareMode::kPerStageShare), 1.0 / 6.0);
  EXPECT_DOUBLE_EQ(share_for_mode(p, 1, ShareMode::kRemainingShare), 1.0 / 4.0);
  EXPECT_DOUBLE_EQ(share_for_mode(p, 3, ShareMode::kCumulativeShare), 1.0);
  EXPECT_DOUBLE_EQ(share_for_mode(p, 3, ShareMode::kPerStageShare), 0.0);
  EXPECT_THROW(stage_share(p, 3), Error);
}

TEST(Shares, CumulativeIsMonotoneAndEndsAtOne) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> t(0.0, 5.0);
  for (int trial = 0; trial < 100; ++trial) {
    auto p = chain(10, 1.0, 10, {t(rng), t(rng), t(rng)});
    double prev = 0.0;
    for (int s = 0; s < 3; ++s) {
      const double phi = stage_share(p, s);
      EXPECT_GE(phi, prev);
      EXPECT_LE(phi, 1.0);
      prev = phi;
    }
    EXPECT_DOUBLE_EQ(prev, 1.0);
  }
}

TEST(Shares, SubDeadline) {
  const auto p = chain(10, 1.0, 10);
  EXPECT_DOUBLE_EQ(sub_deadline(p, 0, 60.0, ShareMode::kCumulativeShare), 20.0);
  EXPECT_DOUBLE_EQ(sub_deadline(p, 2, 60.0, ShareMode::kCumulativeShare), 60.0);
  EXPECT_THROW(sub_deadline(p, 3, 60.0, ShareMode::kCumulativeShare), Error);
  EXPECT_THROW(sub_deadline(p, 0, 0.0, ShareMode::kCumulativeShare), Error);
}

TEST(Prefix, KeepsLeadingStages) {
  const auto p = chain(10, 1.0, 20);
  const auto q = prefix_of(p, 2);
  EXPECT_EQ(q.stage_count(), 2);
  EXPECT_EQ(q.graph.nodes.size(), 2u);
  EXPECT_EQ(q.graph.edges.size(), 1u);
  EXPECT_DOUBLE_EQ(q.total_time, 3.0);
  EXPECT_FALSE(validate_pattern(q).has_value());
}

TEST(Similarity, GaussianKernel) {
  EXPECT_DOUBLE_EQ(gaussian_similarity(100, 100, 1.0), 1.0);
  // sigma = 25 for (100, 50): exp(-2500 / 1250).
  EXPECT_NEAR(gaussian_similarity(100, 50, 1.0), std::exp(-2.0), 1e-15);
  EXPECT_DOUBLE_EQ(gaussian_similarity(50, 100, 1.0), gaussian_similarity(100, 50, 1.0));
}

TEST(Similarity, IdentityMismatchIsZero) {
  EXPECT_DOUBLE_EQ(node_similarity(llm_node(1, 10), tool_node(0, 1.0)), 0.0);
  EXPECT_DOUBLE_EQ(node_similarity(llm_node(1, 10, 0), llm_node(1, 10, 1)), 0.0);
  EXPECT_DOUBLE_EQ(node_similarity(tool_node(2, 1.0), tool_node(2, 1.0)), 1.0);
  EXPECT_DOUBLE_EQ(graph_similarity(chain(10, 1.0, 10), chain(10, 1.0, 10)), 1.0);
  const double s = graph_similarity(chain(10, 1.0, 10), chain(20, 1.0, 10));
  EXPECT_GT(s, 0.0);
  EXPECT_LT(s, 1.0);
}

TEST(Compact, RoundTripAndSize) {
  auto p = chain(123, 1.25, 456);
  p.id = 9;
  const auto bytes = encode_compact(p);
  EXPECT_LT(bytes.size(), kMaxPatternBytes);
  const auto q = decode_compact(bytes);
  EXPECT_EQ(q.graph.nodes.size(), 3u);
  EXPECT_EQ(q.graph.nodes[2].llm().output_len, 456);
  EXPECT_NEAR(q.graph.nodes[1].tool().exec_time, 1.25, 1e-3);
  EXPECT_DOUBLE_EQ(graph_similarity(p, q), 1.0);
}

TEST(Store, IngestDeduplicates) {
  PatternStore store;
  const auto a = store.ingest(chain(10, 1.0, 10), 0.0);
  const auto b = store.ingest(chain(10, 1.0, 10), 5.0);
  EXPECT_EQ(a, b);
  EXPECT_EQ(store.size(), 1u);
  EXPECT_DOUBLE_EQ(store.find(a)->reuse_score, 2.0);
  store.ingest(chain(500, 1.0, 10), 6.0);
  EXPECT_EQ(store.size(), 2u);
}

TEST(Store, RejectsOversizedPattern) {
  StageGraph g;
  for (int i = 0; i < 60; ++i) {
    g.nodes.push_back(llm_node(100000 + i, 100000));
    if (i) g.edges.emplace_back(i - 1, i);
  }
  assign_stages(g);
  PatternStore store;
  try {
    store.ingest(make_pattern(g, std::vector<Seconds>(60, 1.0)), 0.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::kOversizedPattern);
  }
}

TEST(Store, MatchPrefersClosestThenReuse) {
  PatternStore store;
  const auto near = store.ingest(chain(100, 1.0, 10), 0.0);
  store.ingest(chain(400, 1.0, 10), 0.0);
  auto m = store.match(prefix_of(chain(110, 1.0, 99), 1));
  ASSERT_TRUE(m);
  EXPECT_EQ(m->pattern->id, near);
  EXPECT_EQ(m->matched_prefix_stages, 1);

  // Tool identity differs at stage 1: nothing matches a 2-stage prefix.
  StageGraph g;
  g.nodes = {llm_node(100, 100), tool_node(7, 1.0)};
  g.edges = {{0, 1}};
  assign_stages(g);
  auto none = store.match(make_pattern(g, {1.0, 1.0}));
  ASSERT_FALSE(none);
  EXPECT_EQ(none.error().code(), Errc::kNoMatch);
}

TEST(Store, DecayAndEvict) {
  PatternStoreConfig cfg;
  cfg.decay_per_hour = 0.5;
  cfg.eviction_threshold = 0.2;
  PatternStore store(cfg);
  const auto old_id = store.ingest(chain(10, 1.0, 10), 0.0);
  const auto fresh = store.ingest(chain(900, 1.0, 10), 3.0 * 3600.0);
  // After 3 h: 0.125 < 0.2 evicted; the fresh one keeps 1.
  EXPECT_EQ(store.decay_evict(3.0 * 3600.0), 1);
  EXPECT_EQ(store.find(old_id), nullptr);
  EXPECT_NEAR(store.find(fresh)->reuse_score, 1.0, 1e-12);
}

TEST(Store, CapacityDropsLowestScore) {
  PatternStoreConfig cfg;
  cfg.capacity = 2;
  PatternStore store(cfg);
  const auto a = store.ingest(chain(10, 1.0, 10), 0.0);
  store.ingest(chain(10, 1.0, 10), 0.0);  // a now scores 2
  const auto b = store.ingest(chain(300, 1.0, 10), 0.0);
  const auto c = store.ingest(chain(900, 1.0, 10), 0.0);
  EXPECT_EQ(store.size(), 2u);
  EXPECT_NE(store.find(a), nullptr);
  EXPECT_EQ(store.find(b), nullptr);
  EXPECT_NE(store.find(c), nullptr);
}

TEST(Store, JsonlRoundTrip) {
  PatternStore store;
  store.ingest(chain(10, 1.0, 10), 1.0);
  store.ingest(chain(300, 2.0, 10), 2.0);
  store.ingest(chain(900, 1.0, 10), 3.0);
  store.cluster(2);
  const auto copy = PatternStore::from_jsonl(store.to_jsonl());
  EXPECT_EQ(copy.to_jsonl(), store.to_jsonl());
  EXPECT_EQ(copy.medoids(), store.medoids());
  EXPECT_THROW(PatternStore::from_jsonl("{bad"), Error);
}

// Exhaustive best medoid set for tiny matrices.
double best_cost(const std::vector<std::vector<double>>& d, int k) {
  const int n = static_cast<int>(d.size());
  double best = 1e300;
  for (int mask = 0; mask < (1 << n); ++mask) {
    if (__builtin_popcount(mask) != k) continue;
    std::vector<int> m;
    for (int i = 0; i < n; ++i) {
      if (mask >> i & 1) m.push_back(i);
    }
    best = std::min(best, medoid_cost(d, m));
  }
  return best;
}

TEST(Pam, SeparatedClustersReachOptimum) {
  // Points on a line: {0, 1, 2} and {100, 101, 103}.
  const double x[] = {0, 1, 2, 100, 101, 103};
  std::vector<std::vector<double>> d(6, std::vector<double>(6));
  for (int i = 0; i < 6; ++i) {
    for (int j = 0; j < 6; ++j) d[i][j] = std::abs(x[i] - x[j]);
  }
  auto m = pam(d, 2);
  std::sort(m.begin(), m.end());
  EXPECT_EQ(m, (std::vector<int>{1, 4}));
  EXPECT_DOUBLE_EQ(medoid_cost(d, m), best_cost(d, 2));
}

TEST(Pam, SwapLocalOptimum) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 30; ++trial) {
    const int n = 8;
    std::vector<std::pair<double, double>> pts(n);
    for (auto& p : pts) p = {u(rng), u(rng)};
    std::vector<std::vector<double>> d(n, std::vector<double>(n));
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) d[i][j] = std::hypot(pts[i].first - pts[j].first, pts[i].second - pts[j].second);
    }
    const int k = 3;
    auto m = pam(d, k);
    ASSERT_EQ(static_cast<int>(m.size()), k);
    const double cost = medoid_cost(d, m);
    EXPECT_GE(cost, best_cost(d, k) - 1e-12);
    for (int slot = 0; slot < k; ++slot) {
      for (int o = 0; o < n; ++o) {
        if (std::find(m.begin(), m.end(), o) != m.end()) continue;
        auto swapped = m;
        swapped[slot] = o;
        EXPECT_GE(medoid_cost(d, swapped), cost - 1e-12);
      }
    }
  }
}

TEST(Pam, TooFewGraphs) {
  PatternStore store;
  store.ingest(chain(10, 1.0, 10), 0.0);
  EXPECT_THROW(store.cluster(2), Error);
}

TEST(NextShare, UsesMatchedPattern) {
  PatternStore store;
  store.ingest(chain(10, 1.0, 10, {1.0, 1.0, 2.0}), 0.0);
  const auto partial = prefix_of(chain(10, 1.0, 10), 1);
  EXPECT_DOUBLE_EQ(*estimate_next_share(store, partial, ShareMode::kCumulativeShare), 0.5);
  EXPECT_DOUBLE_EQ(*estimate_next_share(store, partial, ShareMode::kPerStageShare), 0.25);
  PatternStore empty;
  EXPECT_FALSE(estimate_next_share(empty, partial, ShareMode::kCumulativeShare).has_value());
}

}  // namespace
}  // namespace gmax
