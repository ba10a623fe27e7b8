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
#include <random>
#include <string>
#include <vector>

#include "gmax/core.h"
#include "gmax/estimator.h"

namespace gmax {

struct LengthStats {
  double mean = 1.0;
  double std = 0.0;
};

// Table of request length statistics per application and shape.
struct AppLengths {
  LengthStats single_input, single_output;
  LengthStats compound_input, compound_output;  // totals over a whole graph
};
AppLengths chatbot_lengths();
AppLengths deepresearch_lengths();

// Lognormal with the given mean and standard deviation.
struct MomentLognormal {
  double mu = 0.0;
  double sigma = 0.0;
  static MomentLognormal from_moments(LengthStats s);
  double at(double z) const { return std::exp(mu + sigma * z); }
};

struct WorkloadParams {
  std::string kind = "mixed";  // chatbot | deepresearch | mixed | poisson | edf_adv | sjf_adv
  int count = 1000;
  std::uint64_t seed = 0;
  double rate = 1.0;            // mean arrivals per second
  bool bursty = false;          // on/off modulated arrivals (always on for "mixed")
  double burst_ratio = 5.0;     // on-rate / off-rate
  double burst_period_s = 120.0;
  double length_correlation = 0.5;  // input/output copula correlation
  int max_input_len = 32768;
  int max_output_len = 8192;
};

const std::vector<std::string>& workload_kinds();

// Throws kUnknownKind. Deterministic given the params.
std::vector<Request> generate_workload(const WorkloadParams& params);

// Synthetic compound graph for (app, stage count); the structure is fixed
// per family while lengths and tool times are drawn from `rng`.
StageGraph make_compound_graph(const std::string& app, int stages, int total_input, int total_output,
                               std::mt19937_64& rng);

// Training rows (true output lengths) for every LLM call in `trace`.
std::vector<TrainingSample> training_rows(const std::vector<Request>& trace, int refine_interval = 50);

// Forest fitted on a mixed synthetic workload drawn from `seed`.
QuantileForest train_default_forest(std::uint64_t seed, int n_requests, ForestParams params = {});

}  // namespace gmax
