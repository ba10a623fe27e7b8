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
#include <span>
#include <vector>

#include "gmax/core.h"
#include "gmax/estimator.h"

namespace gmax {

inline constexpr double kPriorityEpsilon = 1e-6;  // seconds

// Scheduler-facing view of one schedulable unit (a request, a compound
// subrequest, or one replica-specific dummy of either).
struct RequestEstimate {
  RequestId id = 0;
  int replica_id = 0;
  Seconds arrival = 0.0;
  int context_len = 0;  // input_len + generated

  double len_rem = 0.0;  // tokens, upper bound
  Seconds t_gen = 0.0;
  Seconds t_rem = 0.0;
  double bw = 0.0;  // t_gen / t_rem
  double goodput = 0.0;
  double priority = 0.0;
  int frames_waited = 0;
  bool expired = false;

  // Keys used by the baseline policies.
  Seconds deadline = 0.0;           // absolute SLO time (EDF)
  double true_remaining = 0.0;      // oracle remaining work (SJF)
  double predicted_remaining = 0.0; // median prediction (LTR)
  double attained = 0.0;            // tokens served so far, program-wide (PLAS)
  double kv_tokens = 0.0;           // KV footprint for preemption cost
};

// Bandwidth and goodput amortised over a frame of `frame` seconds. Their ratio
// is the priority, whatever the frame length.
double bw_delta(const RequestEstimate& est, Seconds frame);
double goodput_delta(const RequestEstimate& est, Seconds frame);

// Stage-level aggregates for a compound subrequest. Every subrequest of the
// current stage shares them, so completing one alone does not look like
// progress.
struct StageContext {
  Seconds sub_deadline = 0.0;   // absolute, advisory
  Seconds deadline = 0.0;       // absolute end-to-end deadline
  double len_rem = 0.0;         // summed over the stage's unfinished subrequests
  double goodput = 0.0;         // summed over the stage's subrequests
};

struct AnalyzeOptions {
  double epsilon = kPriorityEpsilon;
};

// len_rem, t_gen, t_rem, bw, goodput and priority for one request on one
// replica. Returns kExpiredSlo once t_rem <= 0. Compound requests need a
// StageContext; once their sub-deadline passes they fall back to the overall
// deadline.
Expected<RequestEstimate> analyze(const Request& req, const LengthBound& bound,
                                  const std::optional<StageContext>& stage, Seconds now,
                                  const ModelReplica& replica, const AnalyzeOptions& options = {});

// Estimate for a request that can no longer earn goodput: goodput 0, kept
// schedulable so it is not dropped mid-generation.
RequestEstimate demoted_estimate(const Request& req, const LengthBound& bound, Seconds now,
                                 const ModelReplica& replica, Seconds best_effort_horizon,
                                 const AnalyzeOptions& options = {});

// goodput += delta_starve * frames_waited, priority recomputed.
RequestEstimate starvation_inflate(RequestEstimate est, double delta_starve,
                                   double epsilon = kPriorityEpsilon);

double blend_fairness(double priority, double fair_score, double f);

struct BatchPlan {
  std::vector<RequestId> selected;
  std::vector<RequestId> preempted;
  std::int64_t frame_index = 0;
};

// Cutoff filter at p times the B-th highest priority, then the best
// length-contiguous window of size min(B, |candidates|). Ties go to the window
// whose first element arrived earliest, then to the lower id. O(N log N).
// Throws kEmptyQueue.
BatchPlan select_group(std::span<const RequestEstimate> queue, int batch_size, double cutoff);

struct PreemptionParams {
  double io_bandwidth = 1e6;  // tokens/s moved when releasing KV cache
  double gen_speed = 0.0;     // tokens/s the stalled batch would produce
  double delta_pmtn = 0.10;
  Seconds frame = 0.3;        // seconds per frame, for goodput_delta
};

// Reconciles a proposed group with what is running. Free slots are filled
// first; each further admission must displace the lowest-priority running
// request and passes only if its frame goodput gain beats the stall loss and
// its goodput exceeds (1 + delta_pmtn) times the evictee's.
BatchPlan preemption_check(std::span<const RequestEstimate> running,
                           std::span<const RequestEstimate> proposed, int capacity,
                           const PreemptionParams& params);

enum class PolicyKind { kGmax, kFcfs, kEdf, kSjfOracle, kLtrPredicted, kPlas };

const char* policy_name(PolicyKind kind);
PolicyKind parse_policy(const std::string& name);

// Baseline orderings: the first `batch_size` ids by the policy's key.
std::vector<RequestId> policy_order(PolicyKind policy, std::span<const RequestEstimate> queue,
                                    int batch_size);

// Samples K distinct replicas (all of them when K == |replicas|).
std::vector<int> sample_replicas(int n_replicas, int k, std::mt19937_64& rng);

// One estimate per sampled replica, each with replica-specific priority.
// Replicas whose analysis reports an expired SLO are skipped.
std::vector<RequestEstimate> expand_multi_model(const Request& req, const LengthBound& bound,
                                                const std::optional<StageContext>& stage,
                                                Seconds now,
                                                std::span<const ModelReplica> replicas, int k,
                                                std::mt19937_64& rng);

// Drops every dummy of `assigned` from a queue of dummies.
void remove_siblings(std::vector<RequestEstimate>& queue, RequestId assigned);

// Online tuning of the cutoff p: epsilon-greedy over a fixed grid, scored by
// goodput rate over each evaluation window.
class CutoffAdapter {
 public:
  CutoffAdapter(std::vector<double> grid, double initial, int window_frames, double explore,
                std::uint64_t seed);

  double current() const { return grid_[arm_]; }
  // Call once per frame with the goodput earned and time elapsed in it.
  void record_frame(double goodput, Seconds elapsed);
  const std::vector<double>& mean_rates() const { return mean_rate_; }

 private:
  std::vector<double> grid_;
  std::vector<double> mean_rate_;
  std::vector<int> pulls_;
  int arm_ = 0;
  int window_frames_;
  double explore_;
  std::mt19937_64 rng_;
  int frames_ = 0;
  double window_goodput_ = 0.0;
  Seconds window_time_ = 0.0;
};

}  // namespace gmax
