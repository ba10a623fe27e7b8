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
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gmax/core.h"
#include "gmax/estimator.h"
#include "gmax/patterns.h"
#include "gmax/scheduler.h"

namespace gmax {

// Iteration time = c0 + c_att * max context in batch + c_lin * batch size.
struct CostModel {
  Seconds c0 = 2e-3;
  Seconds c_att = 0.5e-6;
  Seconds c_lin = 0.05e-3;
  int prefill_chunk = 512;
};

// `context_lens` holds the context length of every request in the batch.
// Returns 0 for an empty batch.
Seconds iteration_latency(const CostModel& cm, std::span<const int> context_lens);

// Marks queued, never-scheduled requests that have waited longer than
// `waiting_time` as Dropped and returns their ids.
std::vector<RequestId> admit(std::span<Request> waiting, Seconds now, Seconds waiting_time);

enum class LengthSource {
  kQrf,     // quantile forest predictions, refined during generation
  kOracle,  // true output length
};

struct EngineConfig {
  PolicyKind policy = PolicyKind::kGmax;
  double cutoff = 0.95;
  bool adapt_cutoff = false;
  std::vector<double> cutoff_grid{0.8, 0.9, 0.95, 1.0};
  int adapt_window_frames = 100;
  double adapt_explore = 0.1;
  int frame_iters = 50;
  double delta_starve = 1.0;
  double delta_pmtn = 0.10;
  double io_bandwidth = 1e6;  // tokens/s; infinity makes preemption free
  double fairness = 0.0;
  int power_k = 1;
  double epsilon = kPriorityEpsilon;
  double quantile = 0.95;
  int refine_interval = 50;
  Seconds waiting_time = 5.0;  // <= 0 disables admission drops
  Seconds best_effort_horizon = 600.0;
  GoodputWeights weights;      // multiplied into every request's own weights
  CostModel cost;
  std::vector<ModelReplica> replicas{ModelReplica{}};
  std::uint64_t seed = 0;
  LengthSource length_source = LengthSource::kOracle;
  std::shared_ptr<const QuantileForest> forest;
  ShareMode share_mode = ShareMode::kCumulativeShare;
  PatternStoreConfig pattern_config;
  bool record_frames = true;
};

// Throws kConfigError on out-of-range values.
void validate_config(const EngineConfig& config);

struct SubrequestRecord {
  int node = 0;
  int stage = 0;
  Micros release = 0;
  int input_len = 0;
  int output_len = 0;
  std::vector<Micros> token_times;
  int preemptions = 0;
};

struct RequestRecord {
  RequestId id = 0;
  Seconds arrival = 0.0;
  SloClass slo;
  std::string app_tag;
  int input_len = 0;
  int output_len = 0;
  GoodputWeights weights;
  int stages = 0;  // compound only
  // Non-compound: one timestamp per output token. Compound: see subrequests.
  std::vector<Micros> token_times;
  std::vector<SubrequestRecord> subrequests;
  std::optional<Micros> completion;
  bool dropped = false;
  int preemptions = 0;

  bool is_compound() const { return slo_kind(slo) == SloKind::kCompound; }
  std::optional<Micros> first_token() const;
};

struct FrameRecord {
  int replica = 0;
  std::int64_t frame_index = 0;
  Micros at = 0;
  double cutoff = 0.0;
  std::vector<RequestId> batch;  // request ids (compound subrequests map to their parent)
};

struct SimStats {
  std::int64_t iterations = 0;
  std::int64_t token_advances = 0;  // output tokens emitted, summed over iterations
  std::int64_t preemptions = 0;
  std::int64_t drops = 0;
  std::int64_t work_conservation_violations = 0;
  int max_frames_waited = 0;
  Micros makespan = 0;
};

struct SimResult {
  std::string policy;
  std::vector<RequestRecord> requests;  // sorted by (arrival, id)
  std::vector<FrameRecord> frames;
  SimStats stats;
};

// Runs the trace to completion. Deterministic given (trace, config).
// Throws kInvalidTrace for invalid requests or duplicate ids and kConfigError
// for a bad config.
SimResult run(std::vector<Request> trace, const EngineConfig& config);

nlohmann::json to_json(const SimResult& result);
SimResult sim_result_from_json(const nlohmann::json& j);
std::string dump_result(const SimResult& result);

// Stage barrier bookkeeping for one compound request, usable on its own.
class StageTracker {
 public:
  struct Release {
    std::vector<int> llm_nodes;
    std::vector<int> tool_nodes;
    int stage = -1;  // -1 once the final stage has completed
  };

  explicit StageTracker(const StageGraph& graph);

  // Nodes of stage 0.
  Release start();
  // Records `node` as complete; releases the next stage once every node of
  // the current stage is done.
  Release complete(int node);
  int current_stage() const { return stage_; }
  bool finished() const { return finished_; }

 private:
  Release release_stage(int s);

  const StageGraph* graph_;
  std::vector<char> done_;
  int stage_ = 0;
  int pending_ = 0;
  bool finished_ = false;
};

}  // namespace gmax
