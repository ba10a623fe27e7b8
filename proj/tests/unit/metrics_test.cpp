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

#include "gmax/metrics.h"

#include <gtest/gtest.h>

namespace gmax {
namespace {

RequestRecord latency_record(std::vector<Micros> tokens, int out) {
  RequestRecord r;
  r.id = 1;
  r.arrival = 1.0;
  r.slo = LatencySensitive{0.5, 0.1};
  r.input_len = 10;
  r.output_len = out;
  r.token_times = std::move(tokens);
  if (static_cast<int>(r.token_times.size()) == out) r.completion = r.token_times.back();
  return r;
}

RequestRecord deadline_record(Micros done, Seconds e2el) {
  RequestRecord r;
  r.id = 2;
  r.arrival = 0.0;
  r.slo = DeadlineSensitive{e2el};
  r.input_len = 30;
  r.output_len = 2;
  r.token_times = {done - 1000, done};
  r.completion = done;
  return r;
}

TEST(TokenGoodput, LatencyCountsOnTimeTokens) {
  // Token k is due at 1.0 + 0.5 + 0.1 k: 1.5, 1.6, 1.7.
  auto r = latency_record({1500000, 1600001, 1650000}, 3);
  EXPECT_DOUBLE_EQ(request_token_goodput(r), 2.0);
  EXPECT_FALSE(meets_slo(r));
  r.token_times[1] = 1600000;
  EXPECT_DOUBLE_EQ(request_token_goodput(r), 3.0);
  EXPECT_TRUE(meets_slo(r));
  EXPECT_DOUBLE_EQ(request_token_goodput(r, {5.0, 2.0}), 6.0);
}

TEST(TokenGoodput, DeadlineIsAllOrNothing) {
  auto r = deadline_record(2000000, 2.0);
  EXPECT_DOUBLE_EQ(request_token_goodput(r), 32.0);
  EXPECT_TRUE(meets_slo(r));
  r = deadline_record(2000001, 2.0);
  EXPECT_DOUBLE_EQ(request_token_goodput(r), 0.0);
  EXPECT_FALSE(meets_slo(r));
}

TEST(TokenGoodput, RecordWeightsMultiplySpecWeights) {
  auto r = deadline_record(1000000, 2.0);
  r.weights = {0.0, 3.0};
  EXPECT_DOUBLE_EQ(full_credit(r), 6.0);
  EXPECT_DOUBLE_EQ(full_credit(r, {1.0, 0.5}), 3.0);
}

TEST(TokenGoodput, DroppedEarnsNothing) {
  auto r = deadline_record(1000000, 2.0);
  r.dropped = true;
  EXPECT_DOUBLE_EQ(request_token_goodput(r), 0.0);
  EXPECT_FALSE(meets_slo(r));
}

TEST(TokenGoodput, CompoundSumsSubrequests) {
  RequestRecord r;
  r.slo = Compound{10.0};
  r.subrequests.resize(2);
  r.subrequests[0].input_len = 5;
  r.subrequests[0].output_len = 7;
  r.subrequests[1].input_len = 11;
  r.subrequests[1].output_len = 13;
  r.completion = 9000000;
  EXPECT_DOUBLE_EQ(request_token_goodput(r), 36.0);
  r.completion = 10000001;
  EXPECT_DOUBLE_EQ(request_token_goodput(r), 0.0);
}

TEST(NearestRank, Definition) {
  std::vector<double> v = {5, 1, 4, 2, 3};
  EXPECT_DOUBLE_EQ(nearest_rank(v, 0.5), 3.0);
  EXPECT_DOUBLE_EQ(nearest_rank(v, 0.2), 1.0);
  EXPECT_DOUBLE_EQ(nearest_rank(v, 0.21), 2.0);
  EXPECT_DOUBLE_EQ(nearest_rank(v, 1.0), 5.0);
  EXPECT_DOUBLE_EQ(nearest_rank({}, 0.5), 0.0);
  EXPECT_THROW(nearest_rank(v, 0.0), Error);
}

SimResult small_result() {
  SimResult res;
  res.policy = "gmax";
  res.requests = {latency_record({1500000, 1600000, 1700000}, 3), deadline_record(2000000, 2.0)};
  res.requests[1].id = 2;
  res.stats.makespan = 2000000;
  return res;
}

TEST(Report, AggregatesAndLatencies) {
  const auto rep = make_report(small_result());
  EXPECT_DOUBLE_EQ(rep.token_goodput, 3.0 + 32.0);
  EXPECT_DOUBLE_EQ(rep.request_goodput, 2.0);
  EXPECT_DOUBLE_EQ(rep.attainment, 1.0);
  EXPECT_DOUBLE_EQ(rep.by_class.at("latency"), 3.0);
  EXPECT_DOUBLE_EQ(rep.by_class.at("deadline"), 32.0);
  // TTFT samples 0.5 and 1.999; TBT 0.1, 0.1, 0.001.
  EXPECT_EQ(rep.ttft.samples, 2u);
  EXPECT_NEAR(rep.ttft.p50, 0.5, 1e-12);
  EXPECT_NEAR(rep.tbt.p95, 0.1, 1e-12);
  EXPECT_NEAR(rep.throughput, 5.0 / 2.0, 1e-12);
  GoodputSpec spec;
  spec.level = GoodputLevel::kRequestLevel;
  EXPECT_DOUBLE_EQ(make_report(small_result(), spec).total_goodput, 2.0);
  spec.weights = {0.0, 0.0};
  EXPECT_THROW(make_report(small_result(), spec), Error);
}

TEST(Report, CsvAndJsonCarrySameRows) {
  const auto rep = make_report(small_result());
  const auto csv = report_to_csv(rep);
  EXPECT_EQ(csv.substr(0, 13), "metric,value\n");
  const auto j = report_to_json(rep);
  EXPECT_EQ(j["policy"], "gmax");
  for (const auto& [k, v] : report_rows(rep)) {
    EXPECT_DOUBLE_EQ(j[k].get<double>(), v) << k;
    EXPECT_NE(csv.find(k + ","), std::string::npos) << k;
  }
}

TEST(Report, RelaxingSlosNeverLowersGoodput) {
  auto res = small_result();
  res.requests[1] = deadline_record(2500000, 2.0);
  const double base = token_goodput(res);
  const double relaxed = token_goodput(scale_result_slos(res, 1.5));
  EXPECT_GE(relaxed, base);
  EXPECT_DOUBLE_EQ(relaxed, 35.0);
}

}  // namespace
}  // namespace gmax
