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

#include "gmax/engine.h"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <queue>
#include <random>
#include <unordered_map>
#include <unordered_set>

#include "gmax/json_io.h"

namespace gmax {

Seconds iteration_latency(const CostModel& cm, std::span<const int> context_lens) {
  if (context_lens.empty()) return 0.0;
  const int max_ctx = *std::max_element(context_lens.begin(), context_lens.end());
  return cm.c0 + cm.c_att * max_ctx + cm.c_lin * static_cast<double>(context_lens.size());
}

std::vector<RequestId> admit(std::span<Request> waiting, Seconds now, Seconds waiting_time) {
  std::vector<RequestId> dropped;
  if (!(waiting_time > 0.0)) return dropped;
  for (auto& r : waiting) {
    if (r.state == RequestState::kQueued && now - r.arrival > waiting_time) {
      r.state = RequestState::kDropped;
      dropped.push_back(r.id);
    }
  }
  return dropped;
}

void validate_config(const EngineConfig& c) {
  auto fail = [](const std::string& what) { throw Error(Errc::kConfigError, what); };
  if (c.replicas.empty()) fail("at least one replica is required");
  for (const auto& r : c.replicas) {
    if (r.capacity < 1) fail("replica capacity must be >= 1");
    if (!(r.v_token > 0.0) || !(r.slowdown > 0.0)) fail("replica speed must be positive");
  }
  if (!(c.cutoff > 0.0 && c.cutoff <= 1.0)) fail("cutoff p must lie in (0, 1]");
  for (double p : c.cutoff_grid) {
    if (!(p > 0.0 && p <= 1.0)) fail("cutoff grid values must lie in (0, 1]");
  }
  if (c.adapt_cutoff && c.cutoff_grid.empty()) fail("cutoff adaptation needs a grid");
  if (c.frame_iters < 1) fail("frame length must be >= 1 iteration");
  if (c.delta_starve < 0.0) fail("delta_starve must be >= 0");
  if (c.delta_pmtn < 0.0) fail("delta_pmtn must be >= 0");
  if (!(c.io_bandwidth > 0.0)) fail("io_bandwidth must be positive");
  if (!(c.fairness >= 0.0 && c.fairness <= 1.0)) fail("fairness f must lie in [0, 1]");
  if (c.power_k < 1) fail("K must be >= 1");
  if (!(c.epsilon > 0.0)) fail("epsilon must be positive");
  if (!(c.quantile > 0.0 && c.quantile < 1.0)) fail("quantile must lie in (0, 1)");
  if (c.refine_interval < 1) fail("refine interval must be >= 1");
  if (!(c.best_effort_horizon > 0.0)) fail("best-effort horizon must be positive");
  if (c.weights.input < 0.0 || c.weights.output < 0.0 ||
      (c.weights.input == 0.0 && c.weights.output == 0.0)) {
    fail("goodput weights must be >= 0 and not both zero");
  }
  if (c.cost.c0 < 0.0 || c.cost.c_att < 0.0 || c.cost.c_lin < 0.0) fail("cost coefficients must be >= 0");
  if (c.cost.c0 + c.cost.c_lin <= 0.0) fail("iteration time must be positive");
  if (c.cost.prefill_chunk < 1) fail("prefill chunk must be >= 1");
  if (c.length_source == LengthSource::kQrf && (!c.forest || !c.forest->fitted())) {
    fail("length source 'qrf' needs a fitted forest");
  }
}

std::optional<Micros> RequestRecord::first_token() const {
  if (!is_compound()) {
    if (token_times.empty()) return std::nullopt;
    return token_times.front();
  }
  std::optional<Micros> first;
  for (const auto& s : subrequests) {
    if (!s.token_times.empty() && (!first || s.token_times.front() < *first)) first = s.token_times.front();
  }
  return first;
}

// ---------------------------------------------------------------------------
// StageTracker
// ---------------------------------------------------------------------------

StageTracker::StageTracker(const StageGraph& graph)
    : graph_(&graph), done_(graph.nodes.size(), 0) {}

StageTracker::Release StageTracker::release_stage(int s) {
  Release rel;
  rel.stage = s;
  stage_ = s;
  for (int n : graph_->nodes_in_stage(s)) {
    (graph_->nodes[n].is_llm() ? rel.llm_nodes : rel.tool_nodes).push_back(n);
  }
  pending_ = static_cast<int>(rel.llm_nodes.size() + rel.tool_nodes.size());
  return rel;
}

StageTracker::Release StageTracker::start() { return release_stage(0); }

StageTracker::Release StageTracker::complete(int node) {
  if (node < 0 || node >= static_cast<int>(done_.size()) || done_[node] ||
      graph_->nodes[node].stage != stage_) {
    throw Error(Errc::kInvalidArgument, "node is not pending in the current stage");
  }
  done_[node] = 1;
  if (--pending_ > 0) return Release{{}, {}, stage_};
  if (stage_ + 1 >= graph_->stage_count()) {
    finished_ = true;
    return Release{};
  }
  return release_stage(stage_ + 1);
}

// ---------------------------------------------------------------------------
// Simulator
// ---------------------------------------------------------------------------

namespace {

// Tie order for events sharing a timestamp.
enum class EventKind { kIterationComplete = 0, kToolComplete = 1, kArrival = 2, kAdmissionSweep = 3 };

struct Event {
  Micros at;
  EventKind kind;
  std::uint64_t key;
  int a = 0;  // replica, owner or job
  int b = 0;  // node for tool completions

  bool operator>(const Event& o) const {
    return std::tie(at, kind, key) > std::tie(o.at, o.kind, o.key);
  }
};

struct Job {
  int owner = 0;
  int node = -1;  // stage-graph node for compound subrequests
  int stage = 0;
  int model_id = 0;
  Micros release = 0;
  int input_len = 1;
  int output_len = 1;
  int prefilled = 0;
  int generated = 0;
  RequestState state = RequestState::kQueued;
  int replica = -1;
  std::vector<int> candidates;
  int frames_waited = 0;
  int preemptions = 0;
  LengthBound bound;
  LengthBound median;
  std::vector<Micros> token_times;
};

struct Owner {
  Request req;
  Micros arrival = 0;
  std::optional<StageTracker> tracker;
  std::vector<int> jobs;  // job index per node (compound) or the single job
  std::vector<Micros> stage_end;
  Micros stage_start = 0;
  Seconds sub_deadline = 0.0;  // absolute, compound only
  int attained = 0;
  bool dropped = false;
  std::optional<Micros> completion;
};

struct ReplicaState {
  ModelReplica spec;
  std::vector<int> running;
  std::vector<int> in_flight;
  bool busy = false;
  Micros iter_start = 0;
  std::int64_t iterations = 0;
  std::int64_t frame_index = 0;
  bool frame_due = true;
  std::deque<Seconds> recent;
  Seconds recent_sum = 0.0;
  Seconds pending_stall = 0.0;
  std::optional<CutoffAdapter> adapter;
  double frame_goodput = 0.0;
  Micros frame_start = 0;

  Seconds v_token() const {
    return recent.empty() ? spec.v_token : recent_sum / static_cast<double>(recent.size());
  }
};

class Simulator {
 public:
  Simulator(std::vector<Request> trace, const EngineConfig& config)
      : cfg_(config), rng_(config.seed), store_(config.pattern_config) {
    validate_config(cfg_);
    std::unordered_set<RequestId> ids;
    for (const auto& r : trace) {
      if (auto err = validate_request(r)) {
        throw Error(Errc::kInvalidTrace, "request " + std::to_string(r.id) + ": " + err->what());
      }
      if (!ids.insert(r.id).second) {
        throw Error(Errc::kInvalidTrace, "duplicate request id " + std::to_string(r.id));
      }
    }
    std::stable_sort(trace.begin(), trace.end(), [](const Request& a, const Request& b) {
      return std::tie(a.arrival, a.id) < std::tie(b.arrival, b.id);
    });
    owners_.reserve(trace.size());
    for (auto& r : trace) {
      Owner o;
      o.req = std::move(r);
      o.req.generated = 0;
      o.req.state = RequestState::kQueued;
      o.arrival = to_micros(o.req.arrival);
      owners_.push_back(std::move(o));
    }
    for (size_t i = 0; i < cfg_.replicas.size(); ++i) {
      ReplicaState rs;
      rs.spec = cfg_.replicas[i];
      rs.spec.replica_id = static_cast<int>(i);
      if (cfg_.adapt_cutoff) {
        rs.adapter.emplace(cfg_.cutoff_grid, cfg_.cutoff, cfg_.adapt_window_frames, cfg_.adapt_explore,
                           cfg_.seed * 1315423911ULL + i + 1);
      }
      replicas_.push_back(std::move(rs));
    }
    for (size_t i = 0; i < owners_.size(); ++i) {
      push({owners_[i].arrival, EventKind::kArrival, i, static_cast<int>(i), 0});
    }
  }

  SimResult run() {
    Micros now = 0;
    while (!events_.empty()) {
      now = events_.top().at;
      while (!events_.empty() && events_.top().at == now) {
        Event ev = events_.top();
        events_.pop();
        handle(ev, now);
      }
      for (size_t r = 0; r < replicas_.size(); ++r) schedule(static_cast<int>(r), now);
    }
    return collect(now);
  }

 private:
  void push(Event ev) { events_.push(ev); }

  // ------------------------------------------------------------------ events

  void handle(const Event& ev, Micros now) {
    switch (ev.kind) {
      case EventKind::kArrival: on_arrival(ev.a, now); break;
      case EventKind::kIterationComplete: on_iteration(ev.a, now); break;
      case EventKind::kToolComplete: on_tool(ev.a, ev.b, now); break;
      case EventKind::kAdmissionSweep: on_sweep(ev.a, now); break;
    }
  }

  void on_arrival(int oi, Micros now) {
    Owner& o = owners_[oi];
    if (o.req.stage_graph) {
      o.tracker.emplace(*o.req.stage_graph);
      o.jobs.assign(o.req.stage_graph->nodes.size(), -1);
      o.stage_start = now;
      o.sub_deadline = o.req.arrival + std::get<Compound>(o.req.slo).e2el_slo;
      release(oi, o.tracker->start(), now);
    } else {
      Job j;
      j.owner = oi;
      j.input_len = o.req.input_len;
      j.output_len = o.req.true_output_len;
      o.jobs.push_back(add_job(std::move(j), now));
    }
  }

  int add_job(Job j, Micros now) {
    j.release = now;
    const int idx = static_cast<int>(jobs_.size());
    const int k = std::min<int>(cfg_.power_k, static_cast<int>(replicas_.size()));
    j.candidates = sample_replicas(static_cast<int>(replicas_.size()), k, rng_);
    initial_bound(j);
    jobs_.push_back(std::move(j));
    waiting_.push_back(idx);
    if (cfg_.waiting_time > 0.0) {
      push({now + to_micros(cfg_.waiting_time) + 1, EventKind::kAdmissionSweep,
            static_cast<std::uint64_t>(idx), idx, 0});
    }
    return idx;
  }

  void release(int oi, const StageTracker::Release& rel, Micros now) {
    Owner& o = owners_[oi];
    const auto& graph = *o.req.stage_graph;
    for (int n : rel.llm_nodes) {
      const auto& call = graph.nodes[n].llm();
      Job j;
      j.owner = oi;
      j.node = n;
      j.stage = graph.nodes[n].stage;
      j.model_id = call.model_id;
      j.input_len = call.input_len;
      j.output_len = call.output_len;
      o.jobs[n] = add_job(std::move(j), now);
    }
    for (int n : rel.tool_nodes) {
      const Micros at = now + to_micros(graph.nodes[n].tool().exec_time);
      push({at, EventKind::kToolComplete, (static_cast<std::uint64_t>(oi) << 16) | n, oi, n});
    }
  }

  void on_tool(int oi, int node, Micros now) {
    if (owners_[oi].dropped) return;
    node_done(oi, node, now);
  }

  void node_done(int oi, int node, Micros now) {
    Owner& o = owners_[oi];
    const int finished_stage = o.tracker->current_stage();
    auto rel = o.tracker->complete(node);
    if (rel.stage == finished_stage) return;  // stage barrier still closed
    o.stage_end.push_back(now);
    if (o.tracker->finished()) {
      o.completion = now;
      o.req.state = RequestState::kDone;
      ingest_pattern(o, now);
      return;
    }
    assign_sub_deadline(o, rel.stage, now);
    o.stage_start = now;
    release(oi, rel, now);
  }

  std::vector<Seconds> stage_times(const Owner& o) const {
    std::vector<Seconds> out;
    Micros prev = o.arrival;
    for (Micros end : o.stage_end) {
      out.push_back(to_seconds(end - prev));
      prev = end;
    }
    return out;
  }

  void ingest_pattern(const Owner& o, Micros now) {
    try {
      store_.ingest(make_pattern(*o.req.stage_graph, stage_times(o)), to_seconds(now));
      store_.decay_evict(to_seconds(now));
    } catch (const Error& e) {
      if (e.code() != Errc::kOversizedPattern) throw;
    }
  }

  // Sub-deadline for stage s from the closest stored pattern; the overall
  // deadline when nothing matches.
  void assign_sub_deadline(Owner& o, int s, Micros now) {
    const Seconds e2el = std::get<Compound>(o.req.slo).e2el_slo;
    const Seconds deadline = o.req.arrival + e2el;
    o.sub_deadline = deadline;
    if (store_.size() == 0 || s < 1) return;
    PatternGraph partial = prefix_of(make_pattern(*o.req.stage_graph, stage_times(o)), s);
    auto m = store_.match(partial);
    if (!m) return;
    const PatternGraph& p = *m->pattern;
    const Seconds t = to_seconds(now);
    Seconds sub = deadline;
    switch (cfg_.share_mode) {
      case ShareMode::kCumulativeShare:
        sub = o.req.arrival + share_for_mode(p, s, ShareMode::kCumulativeShare) * e2el;
        break;
      case ShareMode::kPerStageShare:
        sub = t + share_for_mode(p, s, ShareMode::kPerStageShare) * e2el;
        break;
      case ShareMode::kRemainingShare:
        sub = t + share_for_mode(p, s, ShareMode::kRemainingShare) * std::max(deadline - t, 0.0);
        break;
    }
    o.sub_deadline = std::min(sub, deadline);
  }

  void on_sweep(int ji, Micros now) {
    Job& j = jobs_[ji];
    if (j.state != RequestState::kQueued) return;
    drop_owner(j.owner, now);
  }

  void drop_owner(int oi, Micros /*now*/) {
    Owner& o = owners_[oi];
    if (o.dropped) return;
    o.dropped = true;
    o.req.state = RequestState::kDropped;
    ++stats_.drops;
    for (int ji : o.jobs) {
      if (ji < 0) continue;
      Job& j = jobs_[ji];
      if (j.state == RequestState::kDone) continue;
      if (j.state == RequestState::kRunning) {
        auto& run = replicas_[j.replica].running;
        run.erase(std::find(run.begin(), run.end(), ji));
      } else {
        erase_waiting(ji);
      }
      j.state = RequestState::kDropped;
    }
  }

  void erase_waiting(int ji) {
    auto it = std::lower_bound(waiting_.begin(), waiting_.end(), ji);
    if (it != waiting_.end() && *it == ji) waiting_.erase(it);
  }

  void on_iteration(int r, Micros now) {
    ReplicaState& rs = replicas_[r];
    rs.busy = false;
    const Seconds lat = to_seconds(now - rs.iter_start);
    rs.recent.push_back(lat);
    rs.recent_sum += lat;
    if (static_cast<int>(rs.recent.size()) > cfg_.frame_iters) {
      rs.recent_sum -= rs.recent.front();
      rs.recent.pop_front();
    }
    ++rs.iterations;
    ++stats_.iterations;
    for (int ji : rs.in_flight) {
      Job& j = jobs_[ji];
      if (j.state != RequestState::kRunning) continue;
      if (j.prefilled < j.input_len) {
        j.prefilled = std::min(j.input_len, j.prefilled + cfg_.cost.prefill_chunk);
        if (j.prefilled < j.input_len) continue;
      }
      emit_token(r, ji, now);
    }
    rs.in_flight.clear();
    if (rs.iterations % cfg_.frame_iters == 0) rs.frame_due = true;
  }

  void emit_token(int r, int ji, Micros now) {
    Job& j = jobs_[ji];
    Owner& o = owners_[j.owner];
    ++j.generated;
    ++o.attained;
    j.token_times.push_back(now);
    ++stats_.token_advances;
    const GoodputWeights w = weights(o.req);
    if (slo_kind(o.req.slo) == SloKind::kLatency) {
      const auto& s = std::get<LatencySensitive>(o.req.slo);
      const Micros due = to_micros(o.req.arrival + s.ttft_slo + (j.generated - 1) * s.tbt_slo);
      if (now <= due) replicas_[r].frame_goodput += w.output;
    }
    if (j.generated < j.output_len) return;

    j.state = RequestState::kDone;
    auto& run = replicas_[r].running;
    run.erase(std::find(run.begin(), run.end(), ji));
    if (o.req.stage_graph) {
      node_done(j.owner, j.node, now);
      if (o.completion && now <= to_micros(o.req.arrival + std::get<Compound>(o.req.slo).e2el_slo)) {
        replicas_[r].frame_goodput += compound_value(o);
      }
    } else {
      o.completion = now;
      o.req.state = RequestState::kDone;
      if (slo_kind(o.req.slo) == SloKind::kDeadline &&
          now <= to_micros(o.req.arrival + std::get<DeadlineSensitive>(o.req.slo).e2el_slo)) {
        replicas_[r].frame_goodput += w.input * j.input_len + w.output * j.output_len;
      }
    }
  }

  double compound_value(const Owner& o) const {
    const GoodputWeights w = weights(o.req);
    double v = 0.0;
    for (const auto& n : o.req.stage_graph->nodes) {
      if (n.is_llm()) v += w.input * n.llm().input_len + w.output * n.llm().output_len;
    }
    return v;
  }

  GoodputWeights weights(const Request& req) const {
    return {req.weights.input * cfg_.weights.input, req.weights.output * cfg_.weights.output};
  }

  // ------------------------------------------------------------- estimation

  FeatureVector features(const Job& j) const {
    const Owner& o = owners_[j.owner];
    FeatureVector f;
    f.input_len = j.input_len;
    f.app_tag = o.req.app_tag;
    f.generated_so_far = j.generated;
    f.stage_index = j.stage;
    f.model_id = j.model_id;
    return f;
  }

  void initial_bound(Job& j) const {
    if (cfg_.length_source == LengthSource::kOracle) {
      j.bound = LengthBound{static_cast<double>(j.output_len), cfg_.quantile, 0};
      j.median = j.bound;
      return;
    }
    const auto f = features(j);
    j.bound = predict_upper(*cfg_.forest, f, cfg_.quantile);
    if (cfg_.policy == PolicyKind::kLtrPredicted) j.median = predict_upper(*cfg_.forest, f, 0.5);
  }

  void refine_bound(Job& j) const {
    if (cfg_.length_source == LengthSource::kOracle) return;
    const auto f = features(j);
    j.bound = refine(*cfg_.forest, f, j.bound, cfg_.refine_interval);
    if (cfg_.policy == PolicyKind::kLtrPredicted) {
      j.median = refine(*cfg_.forest, f, LengthBound{j.median.total_upper, 0.5, j.median.as_of_generated},
                        cfg_.refine_interval);
    }
  }

  // Never let the bound claim the request is already finished.
  static double effective_bound(const Job& j, const LengthBound& b) {
    return std::max(b.total_upper, static_cast<double>(j.generated + 1));
  }

  StageContext stage_context(const Owner& o) const {
    StageContext ctx;
    ctx.sub_deadline = o.sub_deadline;
    ctx.deadline = o.req.arrival + std::get<Compound>(o.req.slo).e2el_slo;
    const GoodputWeights w = weights(o.req);
    const int s = o.tracker->current_stage();
    for (int n : o.req.stage_graph->nodes_in_stage(s)) {
      const int ji = o.jobs[n];
      if (ji < 0) continue;
      const Job& j = jobs_[ji];
      if (j.state == RequestState::kDone) {
        ctx.goodput += w.input * j.input_len + w.output * j.output_len;
      } else {
        const double b = effective_bound(j, j.bound);
        ctx.len_rem += b - j.generated;
        ctx.goodput += w.input * j.input_len + w.output * b;
      }
    }
    return ctx;
  }

  Seconds edf_key(const Job& j) const {
    const Request& r = owners_[j.owner].req;
    switch (slo_kind(r.slo)) {
      case SloKind::kLatency: {
        const auto& s = std::get<LatencySensitive>(r.slo);
        return r.arrival + s.ttft_slo + j.generated * s.tbt_slo;
      }
      case SloKind::kDeadline: return r.arrival + std::get<DeadlineSensitive>(r.slo).e2el_slo;
      case SloKind::kCompound: return r.arrival + std::get<Compound>(r.slo).e2el_slo;
      case SloKind::kBestEffort: return r.arrival + std::get<BestEffort>(r.slo).default_deadline;
    }
    return 0.0;
  }

  RequestEstimate estimate(int ji, const ReplicaState& rs, Micros now) {
    Job& j = jobs_[ji];
    refine_bound(j);
    const Owner& o = owners_[j.owner];
    Request view;
    view.id = static_cast<RequestId>(ji);
    view.arrival = o.req.stage_graph ? to_seconds(j.release) : o.req.arrival;
    view.input_len = j.input_len;
    view.true_output_len = j.output_len;
    view.slo = o.req.slo;
    view.app_tag = o.req.app_tag;
    view.weights = weights(o.req);
    view.generated = j.generated;
    view.state = j.state;
    LengthBound b = j.bound;
    b.total_upper = effective_bound(j, b);

    ModelReplica replica = rs.spec;
    replica.v_token = rs.v_token();
    std::optional<StageContext> ctx;
    if (o.req.stage_graph) ctx = stage_context(o);
    const Seconds t = to_seconds(now);
    auto analyzed = analyze(view, b, ctx, t, replica, AnalyzeOptions{cfg_.epsilon});
    RequestEstimate est = analyzed ? *analyzed
                                   : demoted_estimate(view, b, t, replica, cfg_.best_effort_horizon,
                                                      AnalyzeOptions{cfg_.epsilon});
    est.frames_waited = j.frames_waited;
    est = starvation_inflate(est, cfg_.delta_starve, cfg_.epsilon);
    est.deadline = edf_key(j);
    est.true_remaining = j.output_len - j.generated + std::max(j.input_len - j.prefilled, 0);
    est.predicted_remaining = effective_bound(j, j.median) - j.generated;
    est.attained = o.attained;
    est.kv_tokens = j.prefilled + j.generated;
    return est;
  }

  // Fair(r): per-app deficit of attained service, scaled to the largest
  // priority in the queue so both terms share units.
  void apply_fairness(std::vector<RequestEstimate>& ests) const {
    if (cfg_.fairness <= 0.0 || ests.empty()) return;
    std::unordered_map<std::string, double> served;
    double total = 0.0;
    for (const auto& o : owners_) {
      served[o.req.app_tag] += o.attained;
      total += o.attained;
    }
    double pmax = 0.0;
    for (const auto& e : ests) pmax = std::max(pmax, e.priority);
    for (auto& e : ests) {
      const auto& tag = owners_[jobs_[e.id].owner].req.app_tag;
      const double share = total > 0.0 ? served[tag] / total : 0.0;
      e.priority = blend_fairness(e.priority, pmax * (1.0 - share), cfg_.fairness);
    }
  }

  // ------------------------------------------------------------- scheduling

  std::vector<int> eligible_waiting(int r) const {
    std::vector<int> out;
    for (int ji : waiting_) {
      const auto& c = jobs_[ji].candidates;
      if (std::find(c.begin(), c.end(), r) != c.end()) out.push_back(ji);
    }
    return out;
  }

  void start_job(int r, int ji) {
    Job& j = jobs_[ji];
    erase_waiting(ji);
    j.state = RequestState::kRunning;
    j.replica = r;
    j.frames_waited = 0;
    replicas_[r].running.push_back(ji);
  }

  void preempt_job(int r, int ji) {
    Job& j = jobs_[ji];
    auto& run = replicas_[r].running;
    run.erase(std::find(run.begin(), run.end(), ji));
    j.state = RequestState::kPreempted;
    j.replica = -1;
    ++j.preemptions;
    ++stats_.preemptions;
    replicas_[r].pending_stall += (j.prefilled + j.generated) / cfg_.io_bandwidth;
    waiting_.insert(std::lower_bound(waiting_.begin(), waiting_.end(), ji), ji);
  }

  double current_cutoff(const ReplicaState& rs) const {
    return rs.adapter ? rs.adapter->current() : cfg_.cutoff;
  }

  void schedule(int r, Micros now) {
    ReplicaState& rs = replicas_[r];
    if (rs.busy) return;
    const bool frame = rs.frame_due;
    if (frame) {
      rs.frame_due = false;
      frame_select(r, now);
    }
    fill_free_slots(r, now);

    const int free_slots = rs.spec.capacity - static_cast<int>(rs.running.size());
    if (free_slots > 0 && !eligible_waiting(r).empty()) ++stats_.work_conservation_violations;

    if (frame) {
      ++rs.frame_index;
      if (rs.adapter) {
        rs.adapter->record_frame(rs.frame_goodput, to_seconds(now - rs.frame_start));
      }
      rs.frame_goodput = 0.0;
      rs.frame_start = now;
      for (int ji : eligible_waiting(r)) {
        int& fw = jobs_[ji].frames_waited;
        ++fw;
        stats_.max_frames_waited = std::max(stats_.max_frames_waited, fw);
      }
      if (cfg_.record_frames && !rs.running.empty()) {
        FrameRecord fr;
        fr.replica = r;
        fr.frame_index = rs.frame_index;
        fr.at = now;
        fr.cutoff = current_cutoff(rs);
        for (int ji : rs.running) fr.batch.push_back(owners_[jobs_[ji].owner].req.id);
        frames_.push_back(std::move(fr));
      }
    }
    if (!rs.running.empty()) start_iteration(r, now);
  }

  void frame_select(int r, Micros now) {
    ReplicaState& rs = replicas_[r];
    const auto waiting = eligible_waiting(r);
    if (waiting.empty()) return;
    if (cfg_.policy == PolicyKind::kFcfs) return;  // non-preemptive

    std::vector<RequestEstimate> running_est, all;
    for (int ji : rs.running) running_est.push_back(estimate(ji, rs, now));
    all = running_est;
    for (int ji : waiting) all.push_back(estimate(ji, rs, now));
    const int cap = rs.spec.capacity;

    if (cfg_.policy == PolicyKind::kGmax) {
      apply_fairness(all);
      std::copy(all.begin(), all.begin() + running_est.size(), running_est.begin());
      BatchPlan proposed = select_group(all, cap, current_cutoff(rs));
      std::unordered_set<RequestId> chosen(proposed.selected.begin(), proposed.selected.end());
      std::vector<RequestEstimate> proposed_est;
      for (const auto& e : all) {
        if (chosen.count(e.id)) proposed_est.push_back(e);
      }
      PreemptionParams pp;
      pp.io_bandwidth = cfg_.io_bandwidth;
      const Seconds v = rs.v_token();
      pp.gen_speed = static_cast<double>(rs.running.size()) / v;
      pp.delta_pmtn = cfg_.delta_pmtn;
      pp.frame = cfg_.frame_iters * v;
      BatchPlan plan = preemption_check(running_est, proposed_est, cap, pp);
      for (RequestId id : plan.preempted) preempt_job(r, static_cast<int>(id));
      for (RequestId id : plan.selected) {
        if (jobs_[id].state != RequestState::kRunning) start_job(r, static_cast<int>(id));
      }
      return;
    }

    const auto top = policy_order(cfg_.policy, all, cap);
    std::unordered_set<RequestId> keep(top.begin(), top.end());
    const auto running = rs.running;
    for (int ji : running) {
      if (!keep.count(static_cast<RequestId>(ji))) preempt_job(r, ji);
    }
    for (RequestId id : top) {
      if (jobs_[id].state != RequestState::kRunning) start_job(r, static_cast<int>(id));
    }
  }

  void fill_free_slots(int r, Micros now) {
    ReplicaState& rs = replicas_[r];
    const int free_slots = rs.spec.capacity - static_cast<int>(rs.running.size());
    if (free_slots <= 0) return;
    const auto waiting = eligible_waiting(r);
    if (waiting.empty()) return;
    std::vector<RequestEstimate> ests;
    ests.reserve(waiting.size());
    for (int ji : waiting) ests.push_back(estimate(ji, rs, now));
    std::vector<RequestId> pick;
    if (cfg_.policy == PolicyKind::kGmax) {
      apply_fairness(ests);
      pick = select_group(ests, free_slots, current_cutoff(rs)).selected;
    } else {
      pick = policy_order(cfg_.policy, ests, free_slots);
    }
    for (RequestId id : pick) start_job(r, static_cast<int>(id));
  }

  void start_iteration(int r, Micros now) {
    ReplicaState& rs = replicas_[r];
    std::vector<int> ctx;
    ctx.reserve(rs.running.size());
    for (int ji : rs.running) ctx.push_back(jobs_[ji].input_len + jobs_[ji].generated);
    Seconds lat = iteration_latency(cfg_.cost, ctx) * rs.spec.slowdown + rs.pending_stall;
    rs.pending_stall = 0.0;
    rs.in_flight = rs.running;
    rs.busy = true;
    rs.iter_start = now;
    push({now + std::max<Micros>(1, to_micros(lat)), EventKind::kIterationComplete,
          static_cast<std::uint64_t>(r), r, 0});
  }

  // ---------------------------------------------------------------- results

  SimResult collect(Micros end) {
    SimResult res;
    res.policy = policy_name(cfg_.policy);
    res.stats = stats_;
    res.stats.makespan = end;
    res.frames = std::move(frames_);
    for (const auto& o : owners_) {
      RequestRecord rec;
      rec.id = o.req.id;
      rec.arrival = o.req.arrival;
      rec.slo = o.req.slo;
      rec.app_tag = o.req.app_tag;
      rec.input_len = o.req.input_len;
      rec.output_len = o.req.true_output_len;
      rec.weights = o.req.weights;
      rec.dropped = o.dropped;
      rec.completion = o.dropped ? std::nullopt : o.completion;
      if (o.req.stage_graph) {
        rec.stages = o.req.stage_graph->stage_count();
        for (size_t n = 0; n < o.jobs.size(); ++n) {
          if (o.jobs[n] < 0) continue;
          const Job& j = jobs_[o.jobs[n]];
          SubrequestRecord s;
          s.node = static_cast<int>(n);
          s.stage = j.stage;
          s.release = j.release;
          s.input_len = j.input_len;
          s.output_len = j.output_len;
          s.token_times = j.token_times;
          s.preemptions = j.preemptions;
          rec.preemptions += j.preemptions;
          rec.subrequests.push_back(std::move(s));
        }
      } else if (!o.jobs.empty()) {
        const Job& j = jobs_[o.jobs.front()];
        rec.token_times = j.token_times;
        rec.preemptions = j.preemptions;
      }
      res.requests.push_back(std::move(rec));
    }
    return res;
  }

  EngineConfig cfg_;
  std::mt19937_64 rng_;
  PatternStore store_;
  std::vector<Owner> owners_;
  std::vector<Job> jobs_;
  std::vector<int> waiting_;  // sorted job indices
  std::vector<ReplicaState> replicas_;
  std::priority_queue<Event, std::vector<Event>, std::greater<>> events_;
  std::vector<FrameRecord> frames_;
  SimStats stats_;
};

}  // namespace

SimResult run(std::vector<Request> trace, const EngineConfig& config) {
  Simulator sim(std::move(trace), config);
  return sim.run();
}

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

using nlohmann::json;

json to_json(const SimResult& result) {
  json reqs = json::array();
  for (const auto& r : result.requests) {
    json jr = {{"id", r.id},
               {"arrival_s", r.arrival},
               {"type", slo_type_name(slo_kind(r.slo))},
               {"slo", slo_to_json(r.slo)},
               {"app_tag", r.app_tag},
               {"input_len", r.input_len},
               {"output_len", r.output_len},
               {"weights", {r.weights.input, r.weights.output}},
               {"dropped", r.dropped},
               {"preemptions", r.preemptions},
               {"completion_us", r.completion ? json(*r.completion) : json(nullptr)}};
    if (r.is_compound()) {
      jr["stages"] = r.stages;
      json subs = json::array();
      for (const auto& s : r.subrequests) {
        subs.push_back({{"node", s.node},
                        {"stage", s.stage},
                        {"release_us", s.release},
                        {"input_len", s.input_len},
                        {"output_len", s.output_len},
                        {"preemptions", s.preemptions},
                        {"token_us", s.token_times}});
      }
      jr["subrequests"] = std::move(subs);
    } else {
      jr["token_us"] = r.token_times;
    }
    reqs.push_back(std::move(jr));
  }
  json frames = json::array();
  for (const auto& f : result.frames) {
    frames.push_back({{"replica", f.replica},
                      {"frame", f.frame_index},
                      {"at_us", f.at},
                      {"cutoff", f.cutoff},
                      {"batch", f.batch}});
  }
  const auto& s = result.stats;
  return {{"policy", result.policy},
          {"stats",
           {{"iterations", s.iterations},
            {"token_advances", s.token_advances},
            {"preemptions", s.preemptions},
            {"drops", s.drops},
            {"work_conservation_violations", s.work_conservation_violations},
            {"max_frames_waited", s.max_frames_waited},
            {"makespan_us", s.makespan}}},
          {"requests", std::move(reqs)},
          {"frames", std::move(frames)}};
}

SimResult sim_result_from_json(const json& j) {
  SimResult res;
  try {
    res.policy = j.at("policy").get<std::string>();
    const auto& s = j.at("stats");
    res.stats.iterations = s.at("iterations");
    res.stats.token_advances = s.at("token_advances");
    res.stats.preemptions = s.at("preemptions");
    res.stats.drops = s.at("drops");
    res.stats.work_conservation_violations = s.at("work_conservation_violations");
    res.stats.max_frames_waited = s.at("max_frames_waited");
    res.stats.makespan = s.at("makespan_us");
    for (const auto& jr : j.at("requests")) {
      RequestRecord r;
      r.id = jr.at("id");
      r.arrival = jr.at("arrival_s");
      r.slo = slo_from_json(jr.at("type").get<std::string>(), jr.at("slo"));
      r.app_tag = jr.at("app_tag");
      r.input_len = jr.at("input_len");
      r.output_len = jr.at("output_len");
      r.weights = {jr.at("weights").at(0).get<double>(), jr.at("weights").at(1).get<double>()};
      r.dropped = jr.at("dropped");
      r.preemptions = jr.at("preemptions");
      if (!jr.at("completion_us").is_null()) r.completion = jr.at("completion_us").get<Micros>();
      if (r.is_compound()) {
        r.stages = jr.at("stages");
        for (const auto& js : jr.at("subrequests")) {
          SubrequestRecord sr;
          sr.node = js.at("node");
          sr.stage = js.at("stage");
          sr.release = js.at("release_us");
          sr.input_len = js.at("input_len");
          sr.output_len = js.at("output_len");
          sr.preemptions = js.at("preemptions");
          sr.token_times = js.at("token_us").get<std::vector<Micros>>();
          r.subrequests.push_back(std::move(sr));
        }
      } else {
        r.token_times = jr.at("token_us").get<std::vector<Micros>>();
      }
      res.requests.push_back(std::move(r));
    }
    for (const auto& jf : j.at("frames")) {
      FrameRecord f;
      f.replica = jf.at("replica");
      f.frame_index = jf.at("frame");
      f.at = jf.at("at_us");
      f.cutoff = jf.at("cutoff");
      f.batch = jf.at("batch").get<std::vector<RequestId>>();
      res.frames.push_back(std::move(f));
    }
  } catch (const json::exception& e) {
    throw Error(Errc::kSchemaMismatch, std::string("malformed simulation result: ") + e.what());
  }
  return res;
}

std::string dump_result(const SimResult& result) { return to_json(result).dump(); }

}  // namespace gmax
