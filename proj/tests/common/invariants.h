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

// Randomized invariant checks shared by the property tests and the
// acceptance binary. Each returns an empty string on success, otherwise a
// description of the first violation found.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "gmax/analysis.h"
#include "gmax/engine.h"
#include "gmax/estimator.h"
#include "gmax/io.h"
#include "gmax/metrics.h"
#include "gmax/patterns.h"
#include "gmax/scheduler.h"
#include "gmax/workload.h"

namespace gmax::invariants {

namespace detail {

template <typename... Args>
std::string fail(const Args&... args) {
  std::ostringstream os;
  (os << ... << args);
  return os.str();
}

inline std::vector<RequestEstimate> random_queue(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<RequestEstimate> q(n);
  for (int i = 0; i < n; ++i) {
    auto& e = q[i];
    e.id = static_cast<RequestId>(i);
    e.arrival = std::floor(u(rng) * 20.0) * 0.5;  // coarse, so ties occur
    e.context_len = 1 + static_cast<int>(u(rng) * 4000);
    e.t_gen = 0.01 + u(rng) * 5.0;
    e.t_rem = 0.1 + u(rng) * 30.0;
    e.bw = e.t_gen / e.t_rem;
    e.goodput = std::floor(u(rng) * 2000.0);
    e.priority = e.goodput / (e.t_gen + kPriorityEpsilon);
    e.kv_tokens = e.context_len;
  }
  return q;
}

inline EngineConfig oracle_config(PolicyKind policy, int capacity, std::uint64_t seed) {
  EngineConfig c;
  c.policy = policy;
  c.replicas[0].capacity = capacity;
  c.length_source = LengthSource::kOracle;
  c.seed = seed;
  return c;
}

inline const std::vector<PolicyKind>& all_policies() {
  static const std::vector<PolicyKind> p = {PolicyKind::kGmax, PolicyKind::kFcfs,
                                            PolicyKind::kEdf, PolicyKind::kSjfOracle,
                                            PolicyKind::kLtrPredicted, PolicyKind::kPlas};
  return p;
}

inline std::vector<Request> small_trace(const std::string& kind, int count, std::uint64_t seed,
                                        double rate) {
  WorkloadParams wp;
  wp.kind = kind;
  wp.count = count;
  wp.seed = seed;
  wp.rate = rate;
  wp.max_input_len = 2048;
  wp.max_output_len = 512;
  return generate_workload(wp);
}

}  // namespace detail

// The plan picked from frame-amortized goodput over frame-amortized
// bandwidth does not depend on the frame length.
inline std::string delta_plan_invariance(std::uint64_t seed, int trials) {
  std::mt19937_64 rng(seed);
  const double frames[] = {0.05, 0.3, 1.0, 2.5, 10.0};
  for (int t = 0; t < trials; ++t) {
    const int n = 1 + static_cast<int>(rng() % 60);
    const int b = 1 + static_cast<int>(rng() % 16);
    auto queue = detail::random_queue(rng, n);
    std::vector<std::vector<RequestId>> plans;
    for (double frame : frames) {
      auto q = queue;
      for (auto& e : q) e.priority = goodput_delta(e, frame) / bw_delta(e, frame);
      plans.push_back(select_group(q, b, 0.95).selected);
    }
    for (size_t i = 1; i < plans.size(); ++i) {
      if (plans[i] != plans[0]) {
        return detail::fail("trial ", t, ": plan changes between frame ", frames[0], " and ",
                            frames[i]);
      }
    }
  }
  return {};
}

// |selected| <= B, ids unique and drawn from the queue; with cutoff 1 and
// B >= |queue| the whole queue is selected.
inline std::string batch_plan_shape(std::uint64_t seed, int trials) {
  std::mt19937_64 rng(seed);
  for (int t = 0; t < trials; ++t) {
    const int n = 1 + static_cast<int>(rng() % 80);
    const int b = 1 + static_cast<int>(rng() % 20);
    const auto queue = detail::random_queue(rng, n);
    const auto plan = select_group(queue, b, 0.9);
    std::set<RequestId> ids(plan.selected.begin(), plan.selected.end());
    if (ids.size() != plan.selected.size()) return detail::fail("trial ", t, ": duplicate ids");
    if (static_cast<int>(ids.size()) != std::min(b, n)) {
      return detail::fail("trial ", t, ": selected ", ids.size(), " of min(B, N) = ", std::min(b, n));
    }
    if (*ids.rbegin() >= static_cast<RequestId>(n)) return detail::fail("trial ", t, ": foreign id");
    const auto all = select_group(queue, n, 1.0);
    if (static_cast<int>(all.selected.size()) != n) {
      return detail::fail("trial ", t, ": cutoff 1 with B >= N dropped requests");
    }
  }
  return {};
}

// Preemption only fires when the admitted request's frame gain beats the
// stall loss and its goodput clears the (1 + delta) ratio; never when the
// stall is prohibitively expensive.
inline std::string preemption_net_gain(std::uint64_t seed, int trials) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  size_t fired = 0;
  for (int t = 0; t < trials; ++t) {
    const int cap = 1 + static_cast<int>(rng() % 8);
    auto pool = detail::random_queue(rng, 2 * cap + 6);
    std::vector<RequestEstimate> running, proposed;
    const int n_running = static_cast<int>(rng() % (cap + 1));
    for (int i = 0; i < n_running; ++i) running.push_back(pool[i]);
    for (size_t i = 0; i < pool.size(); ++i) {
      if (u(rng) < 0.5 && static_cast<int>(proposed.size()) < cap) proposed.push_back(pool[i]);
    }
    PreemptionParams pp;
    pp.io_bandwidth = std::pow(10.0, 2.0 + 5.0 * u(rng));
    pp.gen_speed = 50.0 + 2000.0 * u(rng);
    pp.delta_pmtn = 0.3 * u(rng);
    pp.frame = 0.05 + u(rng);

    const auto plan = preemption_check(running, proposed, cap, pp);
    fired += plan.preempted.size();
    std::map<RequestId, const RequestEstimate*> by_id;
    std::set<RequestId> running_ids;
    for (const auto& r : running) by_id[r.id] = &r, running_ids.insert(r.id);
    for (const auto& r : proposed) by_id[r.id] = &r;
    const std::set<RequestId> selected(plan.selected.begin(), plan.selected.end());
    if (static_cast<int>(selected.size()) > cap) return detail::fail("trial ", t, ": over capacity");
    std::vector<const RequestEstimate*> admitted;
    for (RequestId id : plan.selected) {
      if (!by_id.count(id)) return detail::fail("trial ", t, ": unknown id selected");
      if (!running_ids.count(id)) admitted.push_back(by_id[id]);
    }
    const int free_slots = cap - n_running;
    if (static_cast<int>(admitted.size()) > free_slots + static_cast<int>(plan.preempted.size())) {
      return detail::fail("trial ", t, ": admissions exceed free slots plus evictions");
    }
    for (RequestId out_id : plan.preempted) {
      if (!running_ids.count(out_id) || selected.count(out_id)) {
        return detail::fail("trial ", t, ": bad preemption of ", out_id);
      }
      const auto& out = *by_id[out_id];
      const double loss = out.kv_tokens / pp.io_bandwidth * pp.gen_speed;
      bool justified = false;
      for (const auto* in : admitted) {
        const double gain = goodput_delta(*in, pp.frame) - goodput_delta(out, pp.frame);
        if (gain - loss > 0.0 && in->goodput > (1.0 + pp.delta_pmtn) * out.goodput) justified = true;
      }
      if (!justified) return detail::fail("trial ", t, ": preempted ", out_id, " without net gain");
    }
    // Prohibitive stall: nothing may be evicted.
    pp.io_bandwidth = 1e-9;
    if (!preemption_check(running, proposed, cap, pp).preempted.empty()) {
      return detail::fail("trial ", t, ": preemption despite negative net gain");
    }
  }
  if (fired == 0) return detail::fail("no preemption exercised");
  return {};
}

// Bounds never fall below the tokens already generated and grow with q.
inline std::string clamp_and_quantile_monotone(std::uint64_t seed, int queries) {
  ForestParams fp;
  fp.n_trees = 10;
  fp.seed = seed;
  const auto forest = train_default_forest(seed, 300, fp);
  for (const auto& tree : forest.trees()) {
    for (const auto& node : tree.nodes) {
      if (node.feature < 0 && node.leaf_end - node.leaf_begin < fp.min_leaf) {
        return detail::fail("leaf smaller than min_leaf");
      }
    }
  }
  std::mt19937_64 rng(seed + 1);
  const auto& apps = forest.app_vocab();
  const double qs[] = {0.05, 0.25, 0.5, 0.75, 0.9, 0.95, 0.99};
  for (int i = 0; i < queries; ++i) {
    FeatureVector x;
    x.input_len = 1 + static_cast<int>(rng() % 8000);
    x.app_tag = apps[rng() % apps.size()];
    x.generated_so_far = static_cast<int>(rng() % 20000);
    x.stage_index = static_cast<int>(rng() % 8);
    double prev = -1.0;
    for (double q : qs) {
      const auto b = predict_upper(forest, x, q);
      if (b.total_upper < x.generated_so_far) {
        return detail::fail("query ", i, ": bound ", b.total_upper, " below generated ",
                            x.generated_so_far);
      }
      if (b.total_upper < prev) return detail::fail("query ", i, ": bound decreases at q=", q);
      prev = b.total_upper;
    }
    auto b = predict_upper(forest, x, 0.95);
    for (int step = 0; step < 5; ++step) {
      x.generated_so_far += static_cast<int>(rng() % 400);
      b = refine(forest, x, b, 50);
      if (b.total_upper < x.generated_so_far) return detail::fail("query ", i, ": refined bound below generated");
    }
  }
  return {};
}

// Every emitted token is accounted for, served requests get their full
// response, and no replica idles beside an admissible request.
inline std::string token_and_work_conservation(std::uint64_t seed, int runs) {
  for (int k = 0; k < runs; ++k) {
    const auto trace = detail::small_trace("mixed", 80, seed + k, 3.0);
    for (PolicyKind policy : detail::all_policies()) {
      const auto res = run(trace, detail::oracle_config(policy, 8, seed));
      std::int64_t tokens = 0;
      for (const auto& r : res.requests) {
        if (r.is_compound()) {
          for (const auto& s : r.subrequests) {
            tokens += static_cast<std::int64_t>(s.token_times.size());
            if (r.completion && static_cast<int>(s.token_times.size()) != s.output_len) {
              return detail::fail(policy_name(policy), ": subrequest short of tokens");
            }
          }
        } else {
          tokens += static_cast<std::int64_t>(r.token_times.size());
          if (r.completion && static_cast<int>(r.token_times.size()) != r.output_len) {
            return detail::fail(policy_name(policy), ": request ", r.id, " short of tokens");
          }
        }
        if (r.dropped != !r.completion.has_value()) {
          return detail::fail(policy_name(policy), ": request ", r.id, " neither served nor dropped");
        }
        if (!std::is_sorted(r.token_times.begin(), r.token_times.end())) {
          return detail::fail(policy_name(policy), ": token times out of order");
        }
      }
      if (tokens != res.stats.token_advances) {
        return detail::fail(policy_name(policy), ": ", tokens, " tokens recorded vs ",
                            res.stats.token_advances, " advanced");
      }
      if (res.stats.work_conservation_violations != 0) {
        return detail::fail(policy_name(policy), ": ", res.stats.work_conservation_violations,
                            " idle frames beside admissible work");
      }
    }
  }
  return {};
}

// No subrequest starts before every parent has finished (tools included).
inline std::string compound_causality(std::uint64_t seed, int runs) {
  for (int k = 0; k < runs; ++k) {
    const auto trace = detail::small_trace("deepresearch", 30, seed + k, 0.5);
    std::map<RequestId, const StageGraph*> graphs;
    for (const auto& r : trace) graphs[r.id] = &*r.stage_graph;
    for (PolicyKind policy : {PolicyKind::kGmax, PolicyKind::kFcfs, PolicyKind::kEdf}) {
      auto cfg = detail::oracle_config(policy, 8, seed);
      cfg.waiting_time = 0.0;
      const auto res = run(trace, cfg);
      for (const auto& r : res.requests) {
        const StageGraph& g = *graphs.at(r.id);
        if (!r.completion) continue;
        // Lower bound on every node's finish time, in stage order.
        std::vector<Micros> finish(g.nodes.size(), to_micros(r.arrival));
        std::map<int, const SubrequestRecord*> sub;
        for (const auto& s : r.subrequests) sub[s.node] = &s;
        for (int s = 0; s < g.stage_count(); ++s) {
          for (int n : g.nodes_in_stage(s)) {
            Micros ready = to_micros(r.arrival);
            for (int p : g.parents_of(n)) ready = std::max(ready, finish[p]);
            if (g.nodes[n].is_llm()) {
              const auto* rec = sub.at(n);
              if (rec->release < ready || rec->token_times.empty() ||
                  rec->token_times.front() <= ready) {
                return detail::fail(policy_name(policy), ": request ", r.id, " node ", n,
                                    " starts before its parents finish");
              }
              finish[n] = rec->token_times.back();
            } else {
              finish[n] = ready + to_micros(g.nodes[n].tool().exec_time);
            }
          }
        }
        if (*r.completion < *std::max_element(finish.begin(), finish.end())) {
          return detail::fail(policy_name(policy), ": request ", r.id, " completes early");
        }
      }
    }
  }
  return {};
}

// Scaling every deadline up never lowers goodput on a fixed timeline, and
// credit never exceeds full credit.
inline std::string slo_relaxation_monotone(std::uint64_t seed, int runs) {
  const double factors[] = {0.5, 0.8, 1.0, 1.25, 1.5, 2.0, 4.0};
  for (int k = 0; k < runs; ++k) {
    const auto trace = detail::small_trace("mixed", 120, seed + k, 4.0);
    for (PolicyKind policy : {PolicyKind::kGmax, PolicyKind::kFcfs}) {
      const auto res = run(trace, detail::oracle_config(policy, 8, seed));
      double full = 0.0;
      for (const auto& r : res.requests) full += full_credit(r);
      double prev = -1.0;
      for (double f : factors) {
        const auto scaled = scale_result_slos(res, f);
        const double g = token_goodput(scaled);
        if (g + 1e-9 < prev) return detail::fail(policy_name(policy), ": goodput drops at scale ", f);
        if (g > full + 1e-6) return detail::fail("goodput above full credit");
        if (request_goodput(scaled) > scaled.requests.size()) return detail::fail("request goodput above count");
        prev = g;
      }
    }
  }
  return {};
}

// With starvation inflation on and admission drops off, no request waits
// more than `max_frames` frames on the standard mixed workload below
// saturation (an overloaded queue grows without bound under any policy).
inline std::string starvation_bound(std::uint64_t seed, int max_frames, int* observed = nullptr) {
  WorkloadParams wp;
  wp.kind = "mixed";
  wp.count = 400;
  wp.seed = seed;
  wp.rate = 1.5;
  const auto trace = generate_workload(wp);
  auto cfg = detail::oracle_config(PolicyKind::kGmax, 32, seed);
  cfg.waiting_time = 0.0;
  cfg.delta_starve = 1.0;
  const auto res = run(trace, cfg);
  if (observed) *observed = res.stats.max_frames_waited;
  for (const auto& r : res.requests) {
    if (!r.completion) return detail::fail("request ", r.id, " never served");
  }
  if (res.stats.max_frames_waited > max_frames) {
    return detail::fail("a request waited ", res.stats.max_frames_waited, " frames (bound ",
                        max_frames, ")");
  }
  return {};
}

// Permuting equal-time arrivals in the input leaves the result unchanged,
// and repeated runs are byte-identical.
inline std::string event_order_determinism(std::uint64_t seed) {
  auto trace = detail::small_trace("mixed", 60, seed, 2.0);
  // Collapse arrivals onto a coarse grid so many coincide.
  for (auto& r : trace) r.arrival = std::floor(r.arrival);
  const auto base = dump_result(run(trace, detail::oracle_config(PolicyKind::kGmax, 4, seed)));
  std::mt19937_64 rng(seed);
  for (int k = 0; k < 3; ++k) {
    auto shuffled = trace;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    if (dump_result(run(shuffled, detail::oracle_config(PolicyKind::kGmax, 4, seed))) != base) {
      return detail::fail("permutation ", k, " changes the result");
    }
  }
  return {};
}

// The exact oracle dominates every simulated policy on small instances.
inline std::string oracle_dominance(std::uint64_t seed, int instances, double* mean_gmax_ratio = nullptr) {
  std::mt19937_64 rng(seed);
  const Seconds v = 0.01;
  double ratio_sum = 0.0;
  int ratio_n = 0;
  for (int i = 0; i < instances; ++i) {
    const auto inst = random_instance(rng, 10, 2, v);
    const double best = oracle_schedule(inst).goodput;
    for (PolicyKind policy : detail::all_policies()) {
      const double g = simulate_instance(inst, policy, v, seed);
      if (g > best + 1e-6 * std::max(1.0, best)) {
        return detail::fail("instance ", i, ": ", policy_name(policy), " earns ", g,
                            " above oracle ", best);
      }
      if (policy == PolicyKind::kGmax && best > 0.0) ratio_sum += g / best, ++ratio_n;
    }
  }
  if (mean_gmax_ratio) *mean_gmax_ratio = ratio_n ? ratio_sum / ratio_n : 1.0;
  return {};
}

// Serializations round-trip and pattern invariants hold on generated data.
inline std::string round_trips_and_patterns(std::uint64_t seed) {
  const auto trace = detail::small_trace("mixed", 50, seed, 1.0);
  for (const auto& r : trace) {
    if (auto e = validate_request(r)) return detail::fail("generated request invalid: ", e->what());
  }
  if (trace_to_jsonl(trace_from_jsonl(trace_to_jsonl(trace))) != trace_to_jsonl(trace)) {
    return detail::fail("trace round trip differs");
  }
  const auto res = run(trace, detail::oracle_config(PolicyKind::kGmax, 8, seed));
  if (dump_result(sim_result_from_json(to_json(res))) != dump_result(res)) {
    return detail::fail("result round trip differs");
  }

  PatternStore store;
  std::mt19937_64 rng(seed);
  std::vector<PatternGraph> patterns;
  for (int i = 0; i < 24; ++i) {
    const int stages = 2 + static_cast<int>(rng() % 5);
    auto g = make_compound_graph(i % 2 ? "chatbot" : "deepresearch", stages, 400, 300, rng);
    std::vector<Seconds> times;
    for (int s = 0; s < g.stage_count(); ++s) times.push_back(0.1 + (rng() % 1000) / 100.0);
    patterns.push_back(make_pattern(std::move(g), times));
    const auto& p = patterns.back();
    if (stage_share(p, p.stage_count() - 1) != 1.0) return detail::fail("last share is not 1");
    for (int s = 1; s < p.stage_count(); ++s) {
      if (stage_share(p, s) < stage_share(p, s - 1)) return detail::fail("cumulative share decreases");
    }
    store.ingest(p, 0.0);
  }
  for (const auto& a : patterns) {
    for (const auto& b : patterns) {
      const double s = graph_similarity(a, b);
      if (!(s >= 0.0 && s <= 1.0)) return detail::fail("similarity ", s, " outside [0, 1]");
      if (std::abs(s - graph_similarity(b, a)) > 1e-12) return detail::fail("similarity not symmetric");
    }
  }
  const auto medoids = store.cluster(3);
  for (auto id : medoids) {
    if (!store.find(id)) return detail::fail("medoid ", id, " not stored");
  }
  if (PatternStore::from_jsonl(store.to_jsonl()).to_jsonl() != store.to_jsonl()) {
    return detail::fail("pattern store round trip differs");
  }
  return {};
}

}  // namespace gmax::invariants
