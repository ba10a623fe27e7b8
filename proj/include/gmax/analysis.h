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

#include <optional>
#include <random>
#include <vector>

#include "gmax/core.h"
#include "gmax/engine.h"
#include "gmax/scheduler.h"

namespace gmax {

// ---------------------------------------------------------------------------
// Competitive bound
// ---------------------------------------------------------------------------

struct BoundParams {
  double delta_pmtn = 1.0;
  double alpha = 0.0;
  double beta = 0.0;
  double gamma = 0.0;
  double p = 1.0;
};

// Throws kInvalidArgument unless alpha, beta, gamma >= 0, their sum <= 1,
// delta_pmtn > 0 and p in (0, 1].
void validate_bound_params(const BoundParams& bp);

// p * delta/(1+delta) * min(alpha/(1+delta), beta/(1+delta), gamma*(1+delta)^3).
double bound_value(const BoundParams& bp);

struct BoundOptimum {
  double value = 0.0;
  BoundParams argmax;
};

// Grid search over delta in (0, 3] and the (alpha, beta, gamma) simplex at
// `grid_resolution` points per axis, then pattern-search refinement. With
// `fixed_delta` only the simplex is searched. Deterministic.
BoundOptimum optimize_bound(double p, int grid_resolution = 200,
                            std::optional<double> fixed_delta = std::nullopt);

// ---------------------------------------------------------------------------
// Small instances and the exact oracle
// ---------------------------------------------------------------------------

struct SmallRequest {
  Seconds arrival = 0.0;
  Seconds t_comp = 0.0;
  Seconds t_slo = 0.0;  // relative to arrival
  double goodput = 0.0;
};

struct SmallInstance {
  int n_slots = 1;
  std::vector<SmallRequest> requests;
};

inline constexpr size_t kMaxOracleRequests = 12;

// kTooLarge above kMaxOracleRequests, kInvalidArgument for nonpositive
// fields or slots.
void validate_instance(const SmallInstance& inst);

struct ScheduledPiece {
  int request = 0;
  int slot = 0;
  Seconds start = 0.0;
  Seconds end = 0.0;
};

struct OracleResult {
  double goodput = 0.0;
  std::vector<int> selected;  // indices into the instance, ascending
  std::vector<ScheduledPiece> schedule;
};

// Whether `subset` can all finish on time with preemption and migration
// allowed between identical slots (no request on two slots at once).
// Fills `schedule` when feasible and non-null.
bool preemptive_feasible(const SmallInstance& inst, const std::vector<int>& subset,
                         std::vector<ScheduledPiece>* schedule = nullptr);

// Maximum total goodput of an on-time subset, by branch and bound over
// subsets with an exact feasibility test. Times are rounded to microseconds.
OracleResult oracle_schedule(const SmallInstance& inst);

// ---------------------------------------------------------------------------
// Adversarial constructions and proof-faithful simulation
// ---------------------------------------------------------------------------

struct AdversaryTrace {
  Seconds T = 0.0;
  int N = 0;
  double M = 0.0;
  Seconds delta = 0.0;
  Seconds v_token = 0.0;
  SmallInstance instance;
  std::vector<Request> requests;
};

// Request A (arrival 0, computing time T, SLO T, goodput M) and N requests
// B_i (arrival i*delta, computing time delta, SLO delta, goodput 1) with
// delta = T/(N+1), i = 0..N-1. `v_token` defaults to delta/1000.
AdversaryTrace edf_adversary(Seconds T, int N, double M, Seconds v_token = 0.0);
AdversaryTrace sjf_adversary(Seconds T, int N, double M, Seconds v_token = 0.0);

// Engine requests for an instance: one input token, t_comp / v_token output
// tokens, deadline-sensitive with weights (0, R / L_o).
std::vector<Request> instance_to_trace(const SmallInstance& inst, Seconds v_token);

// One replica with n_slots slots, every iteration taking exactly v_token,
// free preemption, true lengths, a one-iteration frame and no starvation
// inflation or admission drops, so simulated time is the abstract time of
// the constructions.
EngineConfig proof_engine_config(int n_slots, Seconds v_token, PolicyKind policy);

// Simulated token-level goodput of `policy` on the instance.
double simulate_instance(const SmallInstance& inst, PolicyKind policy, Seconds v_token,
                         std::uint64_t seed = 0);

// Random instance with every time a multiple of v_token.
SmallInstance random_instance(std::mt19937_64& rng, int max_requests, int max_slots,
                              Seconds v_token);

}  // namespace gmax
