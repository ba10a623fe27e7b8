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

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "gmax/error.h"

namespace gmax {

using Seconds = double;
// Simulation timestamps. All ordering decisions happen on microseconds so
// float noise never decides a tie.
using Micros = std::int64_t;
using RequestId = std::uint64_t;

inline Micros to_micros(Seconds s) {
  return static_cast<Micros>(std::llround(s * 1e6));
}
inline Seconds to_seconds(Micros us) { return static_cast<double>(us) * 1e-6; }

// ---------------------------------------------------------------------------
// SLO classes
// ---------------------------------------------------------------------------

struct LatencySensitive {
  Seconds ttft_slo = 2.0;
  Seconds tbt_slo = 0.1;
};
struct DeadlineSensitive {
  Seconds e2el_slo = 20.0;
};
struct Compound {
  Seconds e2el_slo = 40.0;
};
struct BestEffort {
  Seconds default_deadline = 600.0;
};

using SloClass =
    std::variant<LatencySensitive, DeadlineSensitive, Compound, BestEffort>;

enum class SloKind { kLatency = 0, kDeadline = 1, kCompound = 2, kBestEffort = 3 };

inline SloKind slo_kind(const SloClass& slo) {
  return static_cast<SloKind>(slo.index());
}
const char* slo_kind_name(SloKind kind);

// Completion deadline relative to arrival. For latency-sensitive requests
// this is the deadline of the last token of an `output_len`-token response.
Seconds relative_deadline(const SloClass& slo, int output_len);

// Every time field must be finite and strictly positive.
bool slo_is_valid(const SloClass& slo);

// Multiplies every SLO time field by `factor` (SLO relaxation/tightening).
SloClass scale_slo(const SloClass& slo, double factor);

// ---------------------------------------------------------------------------
// Stage graphs for compound requests
// ---------------------------------------------------------------------------

struct LlmCall {
  int model_id = 0;
  int input_len = 1;
  int output_len = 1;
};
struct ToolCall {
  int tool_id = 0;
  Seconds exec_time = 0.0;
};

struct StageNode {
  std::variant<LlmCall, ToolCall> call;
  int stage = 0;

  bool is_llm() const { return call.index() == 0; }
  const LlmCall& llm() const { return std::get<LlmCall>(call); }
  const ToolCall& tool() const { return std::get<ToolCall>(call); }
};

struct StageGraph {
  std::vector<StageNode> nodes;
  std::vector<std::pair<int, int>> edges;  // (parent, child)

  int stage_count() const;
  std::vector<int> nodes_in_stage(int stage) const;
  std::vector<int> parents_of(int node) const;
  int total_input_len() const;
  int total_output_len() const;
};

// Recomputes every node's stage as its topological level (longest path from a
// root). Throws kInvalidStageGraph on cycles or out-of-range edges.
void assign_stages(StageGraph& graph);

// Checks acyclicity, parent coverage, stage contiguity and that stored stage
// indices equal topological levels.
std::optional<Error> validate_stage_graph(const StageGraph& graph);

// ---------------------------------------------------------------------------
// Requests and replicas
// ---------------------------------------------------------------------------

enum class RequestState { kQueued, kRunning, kPreempted, kDone, kDropped };

struct GoodputWeights {
  double input = 1.0;
  double output = 1.0;
};

struct Request {
  RequestId id = 0;
  Seconds arrival = 0.0;
  int input_len = 1;
  // Ground truth; only the engine and offline oracles may read it.
  int true_output_len = 1;
  SloClass slo = LatencySensitive{};
  std::string app_tag = "chatbot";
  std::optional<StageGraph> stage_graph;
  GoodputWeights weights;
  int generated = 0;
  RequestState state = RequestState::kQueued;
};

struct ModelReplica {
  int replica_id = 0;
  Seconds v_token = 0.005;
  int capacity = 32;
  // Multiplier on the cost model (heterogeneous hardware).
  double slowdown = 1.0;
};

std::optional<Error> validate_request(const Request& req);

// R(k) = w_i * L_i + w_o * L_o.
double base_goodput(const Request& req);
double base_goodput(const GoodputWeights& w, int input_len, int output_len);

// Queued/Running/Preempted may move among themselves; Done and Dropped are
// terminal.
bool transition_allowed(RequestState from, RequestState to);

}  // namespace gmax
