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

#include "gmax/scheduler.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <unordered_set>

namespace gmax {

double bw_delta(const RequestEstimate& est, Seconds frame) { return est.bw * frame; }

double goodput_delta(const RequestEstimate& est, Seconds frame) {
  if (!(est.t_rem > 0.0)) return 0.0;
  return est.goodput / est.t_rem * frame;
}

Expected<RequestEstimate> analyze(const Request& req, const LengthBound& bound,
                                  const std::optional<StageContext>& stage, Seconds now,
                                  const ModelReplica& replica, const AnalyzeOptions& options) {
  if (req.state == RequestState::kDone || req.state == RequestState::kDropped) {
    return Error(Errc::kInvalidArgument, "analyze on a finished request");
  }
  RequestEstimate est;
  est.id = req.id;
  est.replica_id = replica.replica_id;
  est.arrival = req.arrival;
  est.context_len = req.input_len + req.generated;
  est.kv_tokens = est.context_len;
  est.attained = req.generated;
  est.len_rem = std::max(bound.total_upper - req.generated, 0.0);
  est.t_gen = est.len_rem * replica.v_token;

  const double predicted_total = std::max(bound.total_upper, static_cast<double>(req.generated));
  switch (slo_kind(req.slo)) {
    case SloKind::kDeadline: {
      const auto& s = std::get<DeadlineSensitive>(req.slo);
      est.deadline = req.arrival + s.e2el_slo;
      est.t_rem = est.deadline - now;
      est.goodput = req.weights.input * req.input_len + req.weights.output * predicted_total;
      break;
    }
    case SloKind::kLatency: {
      const auto& s = std::get<LatencySensitive>(req.slo);
      est.deadline = req.arrival + s.ttft_slo + req.generated * s.tbt_slo;
      est.t_rem = req.arrival + s.ttft_slo + predicted_total * s.tbt_slo - now;
      est.goodput = req.weights.output * predicted_total;
      break;
    }
    case SloKind::kCompound: {
      if (!stage) return Error(Errc::kInvalidArgument, "compound request without stage context");
      est.len_rem = stage->len_rem;
      est.t_gen = est.len_rem * replica.v_token;
      est.goodput = stage->goodput;
      est.deadline = stage->deadline;
      est.t_rem = stage->sub_deadline - now;
      if (!(est.t_rem > 0.0)) est.t_rem = stage->deadline - now;
      break;
    }
    case SloKind::kBestEffort: {
      const auto& s = std::get<BestEffort>(req.slo);
      est.deadline = req.arrival + s.default_deadline;
      est.t_rem = est.deadline - now;
      est.goodput = 0.0;
      break;
    }
  }
  if (!(est.t_rem > 0.0)) {
    return Error(Errc::kExpiredSlo, "request " + std::to_string(req.id) + " can no longer meet its SLO");
  }
  est.bw = est.t_gen / est.t_rem;
  est.priority = est.goodput / (est.t_gen + options.epsilon);
  return est;
}

RequestEstimate demoted_estimate(const Request& req, const LengthBound& bound, Seconds now,
                                 const ModelReplica& replica, Seconds best_effort_horizon,
                                 const AnalyzeOptions& options) {
  RequestEstimate est;
  est.id = req.id;
  est.replica_id = replica.replica_id;
  est.arrival = req.arrival;
  est.context_len = req.input_len + req.generated;
  est.kv_tokens = est.context_len;
  est.attained = req.generated;
  est.len_rem = std::max(bound.total_upper - req.generated, 0.0);
  est.t_gen = est.len_rem * replica.v_token;
  est.t_rem = best_effort_horizon;
  est.deadline = now + best_effort_horizon;
  est.bw = est.t_gen / est.t_rem;
  est.goodput = 0.0;
  est.priority = 0.0 / (est.t_gen + options.epsilon);
  est.expired = true;
  return est;
}

RequestEstimate starvation_inflate(RequestEstimate est, double delta_starve, double epsilon) {
  if (delta_starve < 0.0) throw Error(Errc::kInvalidArgument, "delta_starve must be >= 0");
  if (est.frames_waited <= 0 || delta_starve == 0.0) return est;
  est.goodput += delta_starve * est.frames_waited;
  est.priority = est.goodput / (est.t_gen + epsilon);
  return est;
}

double blend_fairness(double priority, double fair_score, double f) {
  if (!(f >= 0.0 && f <= 1.0)) throw Error(Errc::kInvalidArgument, "f must lie in [0, 1]");
  return (1.0 - f) * priority + f * fair_score;
}

// ---------------------------------------------------------------------------
// Group selection
// ---------------------------------------------------------------------------

BatchPlan select_group(std::span<const RequestEstimate> queue, int batch_size, double cutoff) {
  if (queue.empty()) throw Error(Errc::kEmptyQueue, "nothing to schedule");
  if (batch_size < 1) throw Error(Errc::kInvalidArgument, "batch size must be >= 1");
  if (!(cutoff > 0.0 && cutoff <= 1.0)) throw Error(Errc::kInvalidArgument, "cutoff must lie in (0, 1]");
  const size_t n = queue.size();
  const size_t b = static_cast<size_t>(batch_size);

  double bp;
  if (n <= b) {
    bp = std::numeric_limits<double>::infinity();
    for (const auto& e : queue) bp = std::min(bp, e.priority);
  } else {
    std::vector<double> pr(n);
    for (size_t i = 0; i < n; ++i) pr[i] = queue[i].priority;
    std::nth_element(pr.begin(), pr.begin() + (b - 1), pr.end(), std::greater<>());
    bp = pr[b - 1];
  }
  const double threshold = bp >= 0.0 ? cutoff * bp : bp / cutoff;

  std::vector<const RequestEstimate*> cand;
  cand.reserve(n);
  for (const auto& e : queue) {
    if (e.priority >= threshold) cand.push_back(&e);
  }
  std::sort(cand.begin(), cand.end(), [](const RequestEstimate* a, const RequestEstimate* c) {
    return std::tie(a->context_len, a->arrival, a->id) < std::tie(c->context_len, c->arrival, c->id);
  });

  const size_t w = std::min(b, cand.size());
  std::vector<long double> prefix(cand.size() + 1, 0.0L);
  for (size_t i = 0; i < cand.size(); ++i) prefix[i + 1] = prefix[i] + cand[i]->priority;

  size_t best = 0;
  long double best_score = prefix[w] - prefix[0];
  for (size_t start = 1; start + w <= cand.size(); ++start) {
    const long double score = prefix[start + w] - prefix[start];
    const long double tol = 1e-12L * std::max<long double>(1.0L, std::fabs(best_score));
    if (score > best_score + tol) {
      best = start;
      best_score = score;
    } else if (score >= best_score - tol) {
      const auto* a = cand[start];
      const auto* c = cand[best];
      if (std::tie(a->arrival, a->id) < std::tie(c->arrival, c->id)) {
        best = start;
        best_score = std::max(score, best_score);
      }
    }
  }
  BatchPlan plan;
  for (size_t i = best; i < best + w; ++i) plan.selected.push_back(cand[i]->id);
  return plan;
}

// ---------------------------------------------------------------------------
// Preemption
// ---------------------------------------------------------------------------

BatchPlan preemption_check(std::span<const RequestEstimate> running,
                           std::span<const RequestEstimate> proposed, int capacity,
                           const PreemptionParams& params) {
  if (params.delta_pmtn < 0.0) throw Error(Errc::kInvalidArgument, "delta_pmtn must be >= 0");
  std::unordered_set<RequestId> running_ids, proposed_ids;
  for (const auto& r : running) running_ids.insert(r.id);
  for (const auto& r : proposed) proposed_ids.insert(r.id);

  BatchPlan plan;
  std::vector<const RequestEstimate*> admits, evictable;
  for (const auto& r : proposed) {
    if (running_ids.count(r.id)) {
      plan.selected.push_back(r.id);
    } else {
      admits.push_back(&r);
    }
  }
  for (const auto& r : running) {
    if (!proposed_ids.count(r.id)) evictable.push_back(&r);
  }
  std::sort(admits.begin(), admits.end(), [](const auto* a, const auto* b) {
    return a->priority != b->priority ? a->priority > b->priority : a->id < b->id;
  });
  std::sort(evictable.begin(), evictable.end(), [](const auto* a, const auto* b) {
    return a->priority != b->priority ? a->priority < b->priority : a->id < b->id;
  });

  int free_slots = capacity - static_cast<int>(running.size());
  size_t next_out = 0;
  for (const auto* in : admits) {
    if (free_slots > 0) {
      plan.selected.push_back(in->id);
      --free_slots;
      continue;
    }
    if (next_out >= evictable.size()) break;
    const auto* out = evictable[next_out];
    const double stall = out->kv_tokens / params.io_bandwidth;
    const double loss = stall * params.gen_speed;
    const double gain = goodput_delta(*in, params.frame) - goodput_delta(*out, params.frame);
    const bool ratio_ok = in->goodput > (1.0 + params.delta_pmtn) * out->goodput;
    if (gain > loss && ratio_ok) {
      plan.preempted.push_back(out->id);
      plan.selected.push_back(in->id);
      ++next_out;
    }
  }
  for (size_t i = next_out; i < evictable.size(); ++i) plan.selected.push_back(evictable[i]->id);
  return plan;
}

// ---------------------------------------------------------------------------
// Baselines
// ---------------------------------------------------------------------------

const char* policy_name(PolicyKind kind) {
  switch (kind) {
    case PolicyKind::kGmax: return "gmax";
    case PolicyKind::kFcfs: return "fcfs";
    case PolicyKind::kEdf: return "edf";
    case PolicyKind::kSjfOracle: return "sjf_oracle";
    case PolicyKind::kLtrPredicted: return "ltr";
    case PolicyKind::kPlas: return "plas";
  }
  return "unknown";
}

PolicyKind parse_policy(const std::string& name) {
  for (auto k : {PolicyKind::kGmax, PolicyKind::kFcfs, PolicyKind::kEdf, PolicyKind::kSjfOracle,
                 PolicyKind::kLtrPredicted, PolicyKind::kPlas}) {
    if (name == policy_name(k)) return k;
  }
  if (name == "sjf") return PolicyKind::kSjfOracle;
  throw Error(Errc::kConfigError, "unknown policy '" + name + "'");
}

std::vector<RequestId> policy_order(PolicyKind policy, std::span<const RequestEstimate> queue,
                                    int batch_size) {
  std::vector<const RequestEstimate*> order;
  order.reserve(queue.size());
  for (const auto& e : queue) order.push_back(&e);
  auto key = [policy](const RequestEstimate* e) -> double {
    switch (policy) {
      case PolicyKind::kFcfs: return e->arrival;
      case PolicyKind::kEdf: return e->deadline;
      case PolicyKind::kSjfOracle: return e->true_remaining;
      case PolicyKind::kLtrPredicted: return e->predicted_remaining;
      case PolicyKind::kPlas: return e->attained;
      case PolicyKind::kGmax: return -e->priority;
    }
    return 0.0;
  };
  const size_t k = std::min(order.size(), static_cast<size_t>(std::max(batch_size, 0)));
  std::partial_sort(order.begin(), order.begin() + k, order.end(),
                    [&](const RequestEstimate* a, const RequestEstimate* b) {
                      const double ka = key(a), kb = key(b);
                      if (ka != kb) return ka < kb;
                      return std::tie(a->arrival, a->id) < std::tie(b->arrival, b->id);
                    });
  std::vector<RequestId> out;
  for (size_t i = 0; i < k; ++i) out.push_back(order[i]->id);
  return out;
}

// ---------------------------------------------------------------------------
// Multi-model
// ---------------------------------------------------------------------------

std::vector<int> sample_replicas(int n_replicas, int k, std::mt19937_64& rng) {
  if (k < 1 || k > n_replicas) throw Error(Errc::kInvalidArgument, "need 1 <= K <= replicas");
  std::vector<int> all(n_replicas);
  std::iota(all.begin(), all.end(), 0);
  if (k == n_replicas) return all;
  // Partial Fisher-Yates.
  for (int i = 0; i < k; ++i) {
    std::uniform_int_distribution<int> pick(i, n_replicas - 1);
    std::swap(all[i], all[pick(rng)]);
  }
  all.resize(k);
  std::sort(all.begin(), all.end());
  return all;
}

std::vector<RequestEstimate> expand_multi_model(const Request& req, const LengthBound& bound,
                                                const std::optional<StageContext>& stage,
                                                Seconds now,
                                                std::span<const ModelReplica> replicas, int k,
                                                std::mt19937_64& rng) {
  std::vector<RequestEstimate> out;
  for (int idx : sample_replicas(static_cast<int>(replicas.size()), k, rng)) {
    auto est = analyze(req, bound, stage, now, replicas[idx]);
    if (est) out.push_back(*est);
  }
  return out;
}

void remove_siblings(std::vector<RequestEstimate>& queue, RequestId assigned) {
  std::erase_if(queue, [assigned](const RequestEstimate& e) { return e.id == assigned; });
}

// ---------------------------------------------------------------------------
// Cutoff adaptation
// ---------------------------------------------------------------------------

CutoffAdapter::CutoffAdapter(std::vector<double> grid, double initial, int window_frames,
                             double explore, std::uint64_t seed)
    : grid_(std::move(grid)),
      mean_rate_(grid_.size(), 0.0),
      pulls_(grid_.size(), 0),
      window_frames_(std::max(window_frames, 1)),
      explore_(explore),
      rng_(seed) {
  if (grid_.empty()) throw Error(Errc::kConfigError, "empty cutoff grid");
  auto it = std::min_element(grid_.begin(), grid_.end(), [initial](double a, double b) {
    return std::abs(a - initial) < std::abs(b - initial);
  });
  arm_ = static_cast<int>(it - grid_.begin());
}

void CutoffAdapter::record_frame(double goodput, Seconds elapsed) {
  window_goodput_ += goodput;
  window_time_ += elapsed;
  if (++frames_ < window_frames_) return;
  const double rate = window_time_ > 0.0 ? window_goodput_ / window_time_ : 0.0;
  ++pulls_[arm_];
  mean_rate_[arm_] += (rate - mean_rate_[arm_]) / pulls_[arm_];
  frames_ = 0;
  window_goodput_ = 0.0;
  window_time_ = 0.0;

  auto untried = std::find(pulls_.begin(), pulls_.end(), 0);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  if (untried != pulls_.end()) {
    arm_ = static_cast<int>(untried - pulls_.begin());
  } else if (coin(rng_) < explore_) {
    std::uniform_int_distribution<int> pick(0, static_cast<int>(grid_.size()) - 1);
    arm_ = pick(rng_);
  } else {
    arm_ = static_cast<int>(std::max_element(mean_rate_.begin(), mean_rate_.end()) - mean_rate_.begin());
  }
}

}  // namespace gmax
