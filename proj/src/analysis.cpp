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

#include "gmax/analysis.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <queue>

#include "gmax/metrics.h"

namespace gmax {

// ---------------------------------------------------------------------------
// Bound
// ---------------------------------------------------------------------------

void validate_bound_params(const BoundParams& bp) {
  const bool ok = bp.alpha >= 0.0 && bp.beta >= 0.0 && bp.gamma >= 0.0 &&
                  bp.alpha + bp.beta + bp.gamma <= 1.0 + 1e-12 && bp.delta_pmtn > 0.0 &&
                  bp.p > 0.0 && bp.p <= 1.0;
  if (!ok) throw Error(Errc::kInvalidArgument, "bound parameters out of range");
}

double bound_value(const BoundParams& bp) {
  validate_bound_params(bp);
  const double d1 = 1.0 + bp.delta_pmtn;
  const double m = std::min({bp.alpha / d1, bp.beta / d1, bp.gamma * d1 * d1 * d1});
  return bp.p * bp.delta_pmtn / d1 * m;
}

namespace {

// The bound is nondecreasing in alpha, beta and gamma, so the maximum lies on
// the face alpha + beta + gamma = 1; gamma is implied.
double face_value(double delta, double alpha, double beta, double p) {
  const double gamma = std::max(0.0, 1.0 - alpha - beta);
  return bound_value({delta, alpha, beta, gamma, p});
}

}  // namespace

BoundOptimum optimize_bound(double p, int grid_resolution, std::optional<double> fixed_delta) {
  if (grid_resolution < 2) throw Error(Errc::kInvalidArgument, "grid resolution must be >= 2");
  if (!(p > 0.0 && p <= 1.0)) throw Error(Errc::kInvalidArgument, "p must lie in (0, 1]");
  if (fixed_delta && !(*fixed_delta > 0.0)) throw Error(Errc::kInvalidArgument, "delta must be positive");
  constexpr double kDeltaMax = 3.0;
  const int g = grid_resolution;

  double best = -1.0, bd = 0.0, ba = 0.0, bb = 0.0;
  const int nd = fixed_delta ? 1 : g;
  for (int k = 1; k <= nd; ++k) {
    const double d = fixed_delta ? *fixed_delta : kDeltaMax * k / g;
    for (int i = 0; i <= g; ++i) {
      for (int j = 0; i + j <= g; ++j) {
        const double a = static_cast<double>(i) / g, b = static_cast<double>(j) / g;
        const double v = face_value(d, a, b, p);
        if (v > best) {
          best = v;
          bd = d;
          ba = a;
          bb = b;
        }
      }
    }
  }

  // Zoom: re-grid a window of +-2 cells around the incumbent at 1/10 of the
  // spacing, re-centring until the incumbent stops moving, then shrink.
  // Unlike coordinate moves this can walk along the kinks of the min.
  constexpr int kZoomPoints = 20;
  double step_d = fixed_delta ? 0.0 : kDeltaMax / g;
  double step_s = 1.0 / g;
  while (step_s > 1e-13) {
    const double cd = bd, ca = ba, cb = bb;
    const double hd = step_d * 2.0 / kZoomPoints, hs = step_s * 2.0 / kZoomPoints;
    const int nd_zoom = fixed_delta ? 0 : kZoomPoints;
    for (int kd = -nd_zoom; kd <= nd_zoom; ++kd) {
      const double d = cd + kd * hd;
      if (!(d > 0.0) || d > kDeltaMax) continue;
      for (int ka = -kZoomPoints; ka <= kZoomPoints; ++ka) {
        const double a = ca + ka * hs;
        if (a < 0.0 || a > 1.0) continue;
        for (int kb = -kZoomPoints; kb <= kZoomPoints; ++kb) {
          const double b = cb + kb * hs;
          if (b < 0.0 || a + b > 1.0) continue;
          const double v = face_value(d, a, b, p);
          if (v > best) {
            best = v;
            bd = d;
            ba = a;
            bb = b;
          }
        }
      }
    }
    if (bd == cd && ba == ca && bb == cb) {
      step_d /= 10.0;
      step_s /= 10.0;
    }
  }
  BoundOptimum out;
  out.value = best;
  out.argmax = {bd, ba, bb, std::max(0.0, 1.0 - ba - bb), p};
  return out;
}

// ---------------------------------------------------------------------------
// Oracle
// ---------------------------------------------------------------------------

void validate_instance(const SmallInstance& inst) {
  if (inst.requests.size() > kMaxOracleRequests) {
    throw Error(Errc::kTooLarge, "oracle handles at most 12 requests");
  }
  if (inst.n_slots < 1) throw Error(Errc::kInvalidArgument, "need at least one slot");
  for (const auto& r : inst.requests) {
    if (r.arrival < 0.0 || !(r.t_comp > 0.0) || !(r.t_slo > 0.0) || r.goodput < 0.0) {
      throw Error(Errc::kInvalidArgument, "instance fields must be positive");
    }
  }
}

namespace {

// Dinic max-flow on a dense small graph.
class MaxFlow {
 public:
  explicit MaxFlow(int n) : n_(n), cap_(n, std::vector<std::int64_t>(n, 0)), level_(n), it_(n) {}

  void add(int u, int v, std::int64_t c) { cap_[u][v] += c; }
  std::int64_t residual(int u, int v) const { return cap_[u][v]; }

  std::int64_t run(int s, int t) {
    std::int64_t flow = 0;
    while (bfs(s, t)) {
      std::fill(it_.begin(), it_.end(), 0);
      while (std::int64_t f = dfs(s, t, std::numeric_limits<std::int64_t>::max())) flow += f;
    }
    return flow;
  }

 private:
  bool bfs(int s, int t) {
    std::fill(level_.begin(), level_.end(), -1);
    std::queue<int> q;
    level_[s] = 0;
    q.push(s);
    while (!q.empty()) {
      const int u = q.front();
      q.pop();
      for (int v = 0; v < n_; ++v) {
        if (cap_[u][v] > 0 && level_[v] < 0) {
          level_[v] = level_[u] + 1;
          q.push(v);
        }
      }
    }
    return level_[t] >= 0;
  }

  std::int64_t dfs(int u, int t, std::int64_t f) {
    if (u == t) return f;
    for (int& v = it_[u]; v < n_; ++v) {
      if (cap_[u][v] <= 0 || level_[v] != level_[u] + 1) continue;
      if (std::int64_t got = dfs(v, t, std::min(f, cap_[u][v]))) {
        cap_[u][v] -= got;
        cap_[v][u] += got;
        return got;
      }
    }
    return 0;
  }

  int n_;
  std::vector<std::vector<std::int64_t>> cap_;
  std::vector<int> level_;
  std::vector<int> it_;
};

}  // namespace

bool preemptive_feasible(const SmallInstance& inst, const std::vector<int>& subset,
                         std::vector<ScheduledPiece>* schedule) {
  if (schedule) schedule->clear();
  if (subset.empty()) return true;
  const int n = static_cast<int>(subset.size());
  std::vector<Micros> rel(n), due(n), work(n);
  std::vector<Micros> cuts;
  std::int64_t total = 0;
  for (int k = 0; k < n; ++k) {
    const auto& r = inst.requests[subset[k]];
    rel[k] = to_micros(r.arrival);
    due[k] = to_micros(r.arrival + r.t_slo);
    work[k] = to_micros(r.t_comp);
    if (due[k] - rel[k] < work[k]) return false;
    total += work[k];
    cuts.push_back(rel[k]);
    cuts.push_back(due[k]);
  }
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
  const int m = static_cast<int>(cuts.size()) - 1;

  // source, n jobs, m intervals, sink
  const int src = 0, sink = 1 + n + m;
  MaxFlow mf(sink + 1);
  for (int k = 0; k < n; ++k) mf.add(src, 1 + k, work[k]);
  for (int i = 0; i < m; ++i) {
    const std::int64_t len = cuts[i + 1] - cuts[i];
    mf.add(1 + n + i, sink, len * inst.n_slots);
    for (int k = 0; k < n; ++k) {
      if (rel[k] <= cuts[i] && cuts[i + 1] <= due[k]) mf.add(1 + k, 1 + n + i, len);
    }
  }
  const std::int64_t flow = mf.run(src, sink);
  if (flow != total) return false;
  if (!schedule) return true;

  // McNaughton wrap-around inside each interval.
  for (int i = 0; i < m; ++i) {
    const std::int64_t len = cuts[i + 1] - cuts[i];
    int slot = 0;
    std::int64_t t = 0;
    for (int k = 0; k < n; ++k) {
      const bool edge = rel[k] <= cuts[i] && cuts[i + 1] <= due[k];
      if (!edge) continue;
      // flow on job->interval = original capacity (len) - residual
      std::int64_t amount = len - mf.residual(1 + k, 1 + n + i);
      while (amount > 0) {
        const std::int64_t chunk = std::min(amount, len - t);
        schedule->push_back({subset[k], slot, to_seconds(cuts[i] + t), to_seconds(cuts[i] + t + chunk)});
        amount -= chunk;
        t += chunk;
        if (t == len) {
          t = 0;
          ++slot;
        }
      }
    }
  }
  return true;
}

OracleResult oracle_schedule(const SmallInstance& inst) {
  validate_instance(inst);
  const int n = static_cast<int>(inst.requests.size());
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return inst.requests[a].goodput > inst.requests[b].goodput;
  });
  std::vector<double> suffix(n + 1, 0.0);
  for (int k = n - 1; k >= 0; --k) suffix[k] = suffix[k + 1] + inst.requests[order[k]].goodput;

  double best = 0.0;
  std::vector<int> best_set, current;
  double current_value = 0.0;
  // Include-first depth-first search; infeasible sets prune all supersets.
  auto dfs = [&](auto&& self, int k) -> void {
    if (current_value > best) {
      best = current_value;
      best_set = current;
    }
    if (k == n || current_value + suffix[k] <= best) return;
    current.push_back(order[k]);
    if (preemptive_feasible(inst, current)) {
      current_value += inst.requests[order[k]].goodput;
      self(self, k + 1);
      current_value -= inst.requests[order[k]].goodput;
    }
    current.pop_back();
    self(self, k + 1);
  };
  dfs(dfs, 0);

  OracleResult res;
  std::sort(best_set.begin(), best_set.end());
  res.selected = best_set;
  res.goodput = 0.0;
  for (int k : best_set) res.goodput += inst.requests[k].goodput;
  preemptive_feasible(inst, best_set, &res.schedule);
  return res;
}

// ---------------------------------------------------------------------------
// Adversaries and simulation
// ---------------------------------------------------------------------------

namespace {

AdversaryTrace adversary(Seconds T, int N, double M, Seconds v_token) {
  if (!(T > 0.0) || N < 1 || !(M > 0.0)) {
    throw Error(Errc::kInvalidArgument, "adversary needs T > 0, N >= 1, M > 0");
  }
  AdversaryTrace a;
  a.T = T;
  a.N = N;
  a.M = M;
  a.delta = T / (N + 1);
  a.v_token = v_token > 0.0 ? v_token : a.delta / 1000.0;
  a.instance.n_slots = 1;
  a.instance.requests.push_back({0.0, T, T, M});
  for (int i = 0; i < N; ++i) a.instance.requests.push_back({i * a.delta, a.delta, a.delta, 1.0});
  a.requests = instance_to_trace(a.instance, a.v_token);
  return a;
}

}  // namespace

AdversaryTrace edf_adversary(Seconds T, int N, double M, Seconds v_token) {
  return adversary(T, N, M, v_token);
}

// Same arrivals and deadlines as the EDF construction: the B_i are both
// earlier-deadline and shorter than A, so the two policies fail identically.
AdversaryTrace sjf_adversary(Seconds T, int N, double M, Seconds v_token) {
  return adversary(T, N, M, v_token);
}

std::vector<Request> instance_to_trace(const SmallInstance& inst, Seconds v_token) {
  if (!(v_token > 0.0)) throw Error(Errc::kInvalidArgument, "v_token must be positive");
  std::vector<Request> out;
  for (size_t k = 0; k < inst.requests.size(); ++k) {
    const auto& s = inst.requests[k];
    Request r;
    r.id = k;
    r.arrival = s.arrival;
    r.input_len = 1;
    r.true_output_len = std::max(1, static_cast<int>(std::llround(s.t_comp / v_token)));
    r.slo = DeadlineSensitive{s.t_slo};
    r.app_tag = "adversary";
    r.weights = {0.0, s.goodput / r.true_output_len};
    out.push_back(std::move(r));
  }
  return out;
}

EngineConfig proof_engine_config(int n_slots, Seconds v_token, PolicyKind policy) {
  EngineConfig c;
  c.policy = policy;
  c.replicas = {ModelReplica{0, v_token, n_slots, 1.0}};
  c.cost = CostModel{v_token, 0.0, 0.0, 512};
  c.frame_iters = 1;
  c.delta_starve = 0.0;
  c.waiting_time = 0.0;
  c.io_bandwidth = std::numeric_limits<double>::infinity();
  c.length_source = LengthSource::kOracle;
  c.record_frames = false;
  return c;
}

double simulate_instance(const SmallInstance& inst, PolicyKind policy, Seconds v_token,
                         std::uint64_t seed) {
  auto cfg = proof_engine_config(inst.n_slots, v_token, policy);
  cfg.seed = seed;
  return token_goodput(run(instance_to_trace(inst, v_token), cfg));
}

SmallInstance random_instance(std::mt19937_64& rng, int max_requests, int max_slots,
                              Seconds v_token) {
  std::uniform_int_distribution<int> count(1, max_requests);
  std::uniform_int_distribution<int> slots(1, max_slots);
  std::uniform_int_distribution<int> arrival(0, 200);
  std::uniform_int_distribution<int> comp(10, 100);
  std::uniform_real_distribution<double> slack(1.0, 3.0);
  std::uniform_int_distribution<int> value(1, 10);
  SmallInstance inst;
  inst.n_slots = slots(rng);
  const int n = count(rng);
  for (int k = 0; k < n; ++k) {
    SmallRequest r;
    const int c = comp(rng);
    r.arrival = arrival(rng) * v_token;
    r.t_comp = c * v_token;
    r.t_slo = std::ceil(c * slack(rng)) * v_token;
    r.goodput = value(rng);
    inst.requests.push_back(r);
  }
  std::stable_sort(inst.requests.begin(), inst.requests.end(),
                   [](const SmallRequest& a, const SmallRequest& b) { return a.arrival < b.arrival; });
  return inst;
}

}  // namespace gmax
