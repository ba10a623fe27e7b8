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

#include "gmax/core.h"

#include <algorithm>
#include <limits>
#include <sstream>

namespace gmax {

std::string_view errc_name(Errc code) {
  switch (code) {
    case Errc::kInvalidLength: return "InvalidLength";
    case Errc::kInvalidSlo: return "InvalidSlo";
    case Errc::kInvalidStageGraph: return "InvalidStageGraph";
    case Errc::kMissingStageGraph: return "MissingStageGraph";
    case Errc::kUnexpectedStageGraph: return "UnexpectedStageGraph";
    case Errc::kInvalidArgument: return "InvalidArgument";
    case Errc::kInsufficientData: return "InsufficientData";
    case Errc::kNotFitted: return "NotFitted";
    case Errc::kOversizedPattern: return "OversizedPattern";
    case Errc::kNoMatch: return "NoMatch";
    case Errc::kTooFewGraphs: return "TooFewGraphs";
    case Errc::kExpiredSlo: return "ExpiredSlo";
    case Errc::kEmptyQueue: return "EmptyQueue";
    case Errc::kTooLarge: return "TooLarge";
    case Errc::kInvalidTrace: return "InvalidTrace";
    case Errc::kConfigError: return "ConfigError";
    case Errc::kUnknownKind: return "UnknownKind";
    case Errc::kSchemaMismatch: return "SchemaMismatch";
    case Errc::kIoError: return "IoError";
  }
  return "Unknown";
}

const char* slo_kind_name(SloKind kind) {
  switch (kind) {
    case SloKind::kLatency: return "latency";
    case SloKind::kDeadline: return "deadline";
    case SloKind::kCompound: return "compound";
    case SloKind::kBestEffort: return "besteffort";
  }
  return "unknown";
}

Seconds relative_deadline(const SloClass& slo, int output_len) {
  return std::visit(
      [output_len](const auto& s) -> Seconds {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, LatencySensitive>) {
          return s.ttft_slo + std::max(output_len - 1, 0) * s.tbt_slo;
        } else if constexpr (std::is_same_v<T, BestEffort>) {
          return s.default_deadline;
        } else {
          return s.e2el_slo;
        }
      },
      slo);
}

namespace {
bool positive(double x) { return std::isfinite(x) && x > 0.0; }
}  // namespace

bool slo_is_valid(const SloClass& slo) {
  return std::visit(
      [](const auto& s) -> bool {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, LatencySensitive>) {
          return positive(s.ttft_slo) && positive(s.tbt_slo);
        } else if constexpr (std::is_same_v<T, BestEffort>) {
          return positive(s.default_deadline);
        } else {
          return positive(s.e2el_slo);
        }
      },
      slo);
}

SloClass scale_slo(const SloClass& slo, double factor) {
  return std::visit(
      [factor](auto s) -> SloClass {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, LatencySensitive>) {
          s.ttft_slo *= factor;
          s.tbt_slo *= factor;
        } else if constexpr (std::is_same_v<T, BestEffort>) {
          s.default_deadline *= factor;
        } else {
          s.e2el_slo *= factor;
        }
        return s;
      },
      slo);
}

int StageGraph::stage_count() const {
  int n = 0;
  for (const auto& node : nodes) n = std::max(n, node.stage + 1);
  return n;
}

std::vector<int> StageGraph::nodes_in_stage(int stage) const {
  std::vector<int> out;
  for (int i = 0; i < static_cast<int>(nodes.size()); ++i) {
    if (nodes[i].stage == stage) out.push_back(i);
  }
  return out;
}

std::vector<int> StageGraph::parents_of(int node) const {
  std::vector<int> out;
  for (const auto& [p, c] : edges) {
    if (c == node) out.push_back(p);
  }
  return out;
}

int StageGraph::total_input_len() const {
  int total = 0;
  for (const auto& node : nodes) {
    if (node.is_llm()) total += node.llm().input_len;
  }
  return total;
}

int StageGraph::total_output_len() const {
  int total = 0;
  for (const auto& node : nodes) {
    if (node.is_llm()) total += node.llm().output_len;
  }
  return total;
}

namespace {

// Longest-path levels via Kahn's algorithm; empty optional on a cycle.
std::optional<std::vector<int>> topo_levels(const StageGraph& g) {
  const int n = static_cast<int>(g.nodes.size());
  std::vector<int> indeg(n, 0), level(n, 0);
  std::vector<std::vector<int>> children(n);
  for (const auto& [p, c] : g.edges) {
    if (p < 0 || p >= n || c < 0 || c >= n || p == c) return std::nullopt;
    children[p].push_back(c);
    ++indeg[c];
  }
  std::vector<int> frontier;
  for (int i = 0; i < n; ++i) {
    if (indeg[i] == 0) frontier.push_back(i);
  }
  int visited = 0;
  while (!frontier.empty()) {
    int u = frontier.back();
    frontier.pop_back();
    ++visited;
    for (int c : children[u]) {
      level[c] = std::max(level[c], level[u] + 1);
      if (--indeg[c] == 0) frontier.push_back(c);
    }
  }
  if (visited != n) return std::nullopt;
  return level;
}

}  // namespace

void assign_stages(StageGraph& graph) {
  auto levels = topo_levels(graph);
  if (!levels) throw Error(Errc::kInvalidStageGraph, "graph has a cycle or bad edge");
  for (size_t i = 0; i < graph.nodes.size(); ++i) graph.nodes[i].stage = (*levels)[i];
}

std::optional<Error> validate_stage_graph(const StageGraph& graph) {
  if (graph.nodes.empty()) {
    return Error(Errc::kInvalidStageGraph, "stage graph has no nodes");
  }
  auto levels = topo_levels(graph);
  if (!levels) return Error(Errc::kInvalidStageGraph, "cycle or out-of-range edge");
  const int n = static_cast<int>(graph.nodes.size());
  std::vector<bool> seen(graph.stage_count(), false);
  for (int i = 0; i < n; ++i) {
    const auto& node = graph.nodes[i];
    if (node.stage != (*levels)[i]) {
      std::ostringstream msg;
      msg << "node " << i << " stage " << node.stage << " != level " << (*levels)[i];
      return Error(Errc::kInvalidStageGraph, msg.str());
    }
    if (node.stage > 0 && graph.parents_of(i).empty()) {
      return Error(Errc::kInvalidStageGraph, "non-root node without parent");
    }
    seen[node.stage] = true;
    if (node.is_llm()) {
      const auto& llm = node.llm();
      if (llm.input_len < 1 || llm.output_len < 1) {
        return Error(Errc::kInvalidLength, "LLM node with nonpositive length");
      }
    } else if (!(node.tool().exec_time >= 0.0) || !std::isfinite(node.tool().exec_time)) {
      return Error(Errc::kInvalidStageGraph, "tool node with invalid exec_time");
    }
  }
  if (std::find(seen.begin(), seen.end(), false) != seen.end()) {
    return Error(Errc::kInvalidStageGraph, "stage indices not contiguous");
  }
  return std::nullopt;
}

std::optional<Error> validate_request(const Request& req) {
  if (req.input_len < 1 || req.true_output_len < 1) {
    return Error(Errc::kInvalidLength, "L_i and L_o must be >= 1");
  }
  if (req.generated < 0 || req.generated > req.true_output_len) {
    return Error(Errc::kInvalidLength, "generated outside [0, L_o]");
  }
  if (!std::isfinite(req.arrival) || req.arrival < 0.0) {
    return Error(Errc::kInvalidArgument, "arrival must be finite and >= 0");
  }
  if (!slo_is_valid(req.slo)) {
    return Error(Errc::kInvalidSlo, "SLO time fields must be strictly positive");
  }
  if (req.weights.input < 0.0 || req.weights.output < 0.0) {
    return Error(Errc::kInvalidArgument, "goodput weights must be >= 0");
  }
  if (!(base_goodput(req) > 0.0)) {
    return Error(Errc::kInvalidArgument, "base goodput must be positive");
  }
  const bool compound = slo_kind(req.slo) == SloKind::kCompound;
  if (compound && !req.stage_graph) {
    return Error(Errc::kMissingStageGraph, "compound request without stage graph");
  }
  if (!compound && req.stage_graph) {
    return Error(Errc::kUnexpectedStageGraph, "stage graph on a non-compound request");
  }
  if (req.stage_graph) {
    if (auto err = validate_stage_graph(*req.stage_graph)) return err;
    bool has_llm = false;
    for (const auto& node : req.stage_graph->nodes) has_llm |= node.is_llm();
    if (!has_llm) return Error(Errc::kInvalidStageGraph, "compound without LLM node");
    if (req.stage_graph->total_input_len() != req.input_len ||
        req.stage_graph->total_output_len() != req.true_output_len) {
      return Error(Errc::kInvalidLength, "compound lengths must equal stage graph totals");
    }
  }
  return std::nullopt;
}

double base_goodput(const GoodputWeights& w, int input_len, int output_len) {
  return w.input * input_len + w.output * output_len;
}

double base_goodput(const Request& req) {
  return base_goodput(req.weights, req.input_len, req.true_output_len);
}

bool transition_allowed(RequestState from, RequestState to) {
  if (from == RequestState::kDone || from == RequestState::kDropped) return false;
  if (to == RequestState::kQueued) return from == RequestState::kQueued;
  return true;
}

}  // namespace gmax
