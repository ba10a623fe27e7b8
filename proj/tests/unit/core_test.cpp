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

#include "gmax/core.h"

#include <gtest/gtest.h>

#include "helpers.h"

namespace gmax {
namespace {

using testing::chain_graph;
using testing::deadline_request;
using testing::llm_node;

TEST(Slo, RelativeDeadlinePerClass) {
  EXPECT_DOUBLE_EQ(relative_deadline(LatencySensitive{2.0, 0.1}, 11), 2.0 + 10 * 0.1);
  EXPECT_DOUBLE_EQ(relative_deadline(LatencySensitive{2.0, 0.1}, 1), 2.0);
  EXPECT_DOUBLE_EQ(relative_deadline(DeadlineSensitive{20.0}, 500), 20.0);
  EXPECT_DOUBLE_EQ(relative_deadline(Compound{40.0}, 5), 40.0);
  EXPECT_DOUBLE_EQ(relative_deadline(BestEffort{600.0}, 5), 600.0);
}

TEST(Slo, ValidityRejectsNonPositiveAndNonFinite) {
  EXPECT_TRUE(slo_is_valid(LatencySensitive{1.0, 0.05}));
  EXPECT_FALSE(slo_is_valid(LatencySensitive{0.0, 0.05}));
  EXPECT_FALSE(slo_is_valid(DeadlineSensitive{-1.0}));
  EXPECT_FALSE(slo_is_valid(Compound{std::numeric_limits<double>::infinity()}));
}

TEST(Slo, ScaleMultipliesEveryField) {
  auto s = std::get<LatencySensitive>(scale_slo(LatencySensitive{2.0, 0.1}, 1.5));
  EXPECT_DOUBLE_EQ(s.ttft_slo, 3.0);
  EXPECT_DOUBLE_EQ(s.tbt_slo, 0.15);
  EXPECT_DOUBLE_EQ(std::get<Compound>(scale_slo(Compound{40.0}, 0.5)).e2el_slo, 20.0);
  EXPECT_EQ(slo_kind(scale_slo(DeadlineSensitive{3.0}, 2.0)), SloKind::kDeadline);
}

TEST(Micros, RoundsToNearest) {
  EXPECT_EQ(to_micros(1.0000004), 1000000);
  EXPECT_EQ(to_micros(1.0000006), 1000001);
  EXPECT_DOUBLE_EQ(to_seconds(2500000), 2.5);
}

TEST(StageGraph, AssignStagesUsesLongestPath) {
  StageGraph g;
  g.nodes = {llm_node(1, 1), llm_node(1, 1), llm_node(1, 1), llm_node(1, 1)};
  // 0 -> 1 -> 3 and 0 -> 2 -> ... 2 -> 1: node 1 sits at level 2.
  g.edges = {{0, 1}, {0, 2}, {2, 1}, {1, 3}};
  assign_stages(g);
  EXPECT_EQ(g.nodes[0].stage, 0);
  EXPECT_EQ(g.nodes[2].stage, 1);
  EXPECT_EQ(g.nodes[1].stage, 2);
  EXPECT_EQ(g.nodes[3].stage, 3);
  EXPECT_EQ(g.stage_count(), 4);
  EXPECT_FALSE(validate_stage_graph(g).has_value());
}

TEST(StageGraph, CycleIsRejected) {
  StageGraph g;
  g.nodes = {llm_node(1, 1), llm_node(1, 1)};
  g.edges = {{0, 1}, {1, 0}};
  try {
    assign_stages(g);
    FAIL() << "cycle accepted";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::kInvalidStageGraph);
  }
  auto err = validate_stage_graph(g);
  ASSERT_TRUE(err.has_value());
  EXPECT_EQ(err->code(), Errc::kInvalidStageGraph);
}

TEST(StageGraph, StaleStageIndexIsRejected) {
  auto g = chain_graph(10, 5, 1.0, 20, 6);
  g.nodes[2].stage = 1;
  EXPECT_TRUE(validate_stage_graph(g).has_value());
}

TEST(StageGraph, Totals) {
  auto g = chain_graph(10, 5, 1.0, 20, 6);
  EXPECT_EQ(g.total_input_len(), 30);
  EXPECT_EQ(g.total_output_len(), 11);
  EXPECT_EQ(g.nodes_in_stage(1), std::vector<int>{1});
  EXPECT_EQ(g.parents_of(2), std::vector<int>{1});
}

TEST(Request, Validation) {
  auto r = deadline_request(1, 0.0, 10, 20, 5.0);
  EXPECT_FALSE(validate_request(r).has_value());

  auto bad = r;
  bad.true_output_len = 0;
  EXPECT_EQ(validate_request(bad)->code(), Errc::kInvalidLength);

  bad = r;
  bad.slo = DeadlineSensitive{0.0};
  EXPECT_EQ(validate_request(bad)->code(), Errc::kInvalidSlo);

  bad = r;
  bad.slo = Compound{10.0};
  EXPECT_EQ(validate_request(bad)->code(), Errc::kMissingStageGraph);

  bad = r;
  bad.stage_graph = chain_graph(5, 10, 1.0, 5, 10);
  EXPECT_EQ(validate_request(bad)->code(), Errc::kUnexpectedStageGraph);

  auto c = testing::compound_request(2, 0.0, chain_graph(5, 10, 1.0, 5, 10), 30.0);
  EXPECT_FALSE(validate_request(c).has_value());
  c.input_len += 1;
  EXPECT_EQ(validate_request(c)->code(), Errc::kInvalidLength);
}

TEST(Request, BaseGoodput) {
  auto r = deadline_request(1, 0.0, 10, 20, 5.0);
  r.weights = {0.5, 2.0};
  EXPECT_DOUBLE_EQ(base_goodput(r), 0.5 * 10 + 2.0 * 20);
}

TEST(Request, Transitions) {
  using S = RequestState;
  EXPECT_TRUE(transition_allowed(S::kQueued, S::kRunning));
  EXPECT_TRUE(transition_allowed(S::kRunning, S::kPreempted));
  EXPECT_TRUE(transition_allowed(S::kPreempted, S::kRunning));
  EXPECT_TRUE(transition_allowed(S::kRunning, S::kDone));
  EXPECT_FALSE(transition_allowed(S::kDone, S::kRunning));
  EXPECT_FALSE(transition_allowed(S::kDropped, S::kQueued));
  EXPECT_FALSE(transition_allowed(S::kRunning, S::kQueued));
}

TEST(ErrorType, WhatCarriesCode) {
  Error e(Errc::kTooLarge, "13 requests");
  EXPECT_EQ(std::string(e.what()), "TooLarge: 13 requests");
  Expected<int> ok(3);
  EXPECT_EQ(*ok, 3);
  Expected<int> bad(Error(Errc::kNoMatch, "x"));
  EXPECT_FALSE(bad);
  EXPECT_THROW(bad.value(), Error);
}

}  // namespace
}  // namespace gmax
