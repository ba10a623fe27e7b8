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

#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gmax/engine.h"

namespace gmax {

enum class GoodputLevel { kTokenLevel, kRequestLevel };

// Weights multiply the per-request weights stored in the result.
struct GoodputSpec {
  GoodputLevel level = GoodputLevel::kTokenLevel;
  GoodputWeights weights;
};

void validate_goodput_spec(const GoodputSpec& spec);

struct Percentiles {
  double p50 = 0.0;
  double p95 = 0.0;
  size_t samples = 0;
};

struct GoodputReport {
  std::string policy;
  double total_goodput = 0.0;  // at the GoodputSpec level
  double token_goodput = 0.0;
  double request_goodput = 0.0;
  std::map<std::string, double> by_class;  // token goodput per SLO type
  double attainment = 0.0;                 // requests meeting SLO / all requests
  Percentiles ttft, tbt, e2el;             // seconds
  double throughput = 0.0;                 // output tokens per simulated second
  size_t requests = 0;
  size_t drops = 0;
  std::int64_t preemptions = 0;
};

// Credit for one request under its SLO class (token level).
double request_token_goodput(const RequestRecord& r, const GoodputWeights& w = {});
// Whether every SLO condition of the request is met.
bool meets_slo(const RequestRecord& r);
// Full credit: w_i * L_i + w_o * L_o (summed over subrequests for compound).
double full_credit(const RequestRecord& r, const GoodputWeights& w = {});

double token_goodput(const SimResult& result, const GoodputSpec& spec = {});
std::size_t request_goodput(const SimResult& result);

// Nearest-rank percentile of `values` (q in (0, 1]).
double nearest_rank(std::vector<double> values, double q);

// TTFT/TBT/E2EL samples in seconds.
struct LatencySamples {
  std::vector<double> ttft, tbt, e2el;
};
LatencySamples latency_samples(const SimResult& result);

GoodputReport latency_stats(const SimResult& result);
GoodputReport make_report(const SimResult& result, const GoodputSpec& spec = {});

// Every deadline scaled by `factor`, timelines untouched.
SimResult scale_result_slos(SimResult result, double factor);

nlohmann::json report_to_json(const GoodputReport& report);
// Flat metric,value rows (header included).
std::string report_to_csv(const GoodputReport& report);
// (metric, value) pairs in a fixed order.
std::vector<std::pair<std::string, double>> report_rows(const GoodputReport& report);

}  // namespace gmax
