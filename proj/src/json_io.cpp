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

#include "gmax/json_io.h"

namespace gmax {

using nlohmann::json;

json stage_graph_to_json(const StageGraph& graph) {
  json nodes = json::array();
  for (const auto& node : graph.nodes) {
    if (node.is_llm()) {
      const auto& llm = node.llm();
      nodes.push_back({{"kind", "llm"},
                       {"model", llm.model_id},
                       {"input_len", llm.input_len},
                       {"output_len", llm.output_len}});
    } else {
      nodes.push_back({{"kind", "tool"}, {"tool", node.tool().tool_id}, {"exec_s", node.tool().exec_time}});
    }
  }
  json edges = json::array();
  for (const auto& [p, c] : graph.edges) edges.push_back({p, c});
  return {{"nodes", std::move(nodes)}, {"edges", std::move(edges)}};
}

StageGraph stage_graph_from_json(const json& j) {
  StageGraph graph;
  try {
    for (const auto& jn : j.at("nodes")) {
      StageNode node;
      const std::string kind = jn.at("kind");
      if (kind == "llm") {
        node.call = LlmCall{jn.at("model").get<int>(), jn.at("input_len").get<int>(),
                            jn.at("output_len").get<int>()};
      } else if (kind == "tool") {
        node.call = ToolCall{jn.at("tool").get<int>(), jn.at("exec_s").get<double>()};
      } else {
        throw Error(Errc::kInvalidStageGraph, "unknown node kind '" + kind + "'");
      }
      graph.nodes.push_back(node);
    }
    for (const auto& je : j.at("edges")) {
      graph.edges.emplace_back(je.at(0).get<int>(), je.at(1).get<int>());
    }
  } catch (const json::exception& e) {
    throw Error(Errc::kInvalidStageGraph, e.what());
  }
  assign_stages(graph);
  return graph;
}

const char* slo_type_name(SloKind kind) {
  switch (kind) {
    case SloKind::kLatency: return "latency";
    case SloKind::kDeadline: return "deadline";
    case SloKind::kCompound: return "compound";
    case SloKind::kBestEffort: return "besteffort";
  }
  return "unknown";
}

json slo_to_json(const SloClass& slo) {
  return std::visit(
      [](const auto& s) -> json {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, LatencySensitive>) {
          return {{"ttft_s", s.ttft_slo}, {"tbt_s", s.tbt_slo}};
        } else if constexpr (std::is_same_v<T, BestEffort>) {
          return {{"e2el_s", s.default_deadline}};
        } else {
          return {{"e2el_s", s.e2el_slo}};
        }
      },
      slo);
}

SloClass slo_from_json(const std::string& type, const json& j) {
  const json empty = json::object();
  const json& o = j.is_object() ? j : empty;
  try {
    if (type == "latency") {
      LatencySensitive s;
      s.ttft_slo = o.value("ttft_s", s.ttft_slo);
      s.tbt_slo = o.value("tbt_s", s.tbt_slo);
      return s;
    }
    if (type == "deadline") {
      DeadlineSensitive s;
      s.e2el_slo = o.value("e2el_s", s.e2el_slo);
      return s;
    }
    if (type == "compound") {
      Compound s;
      s.e2el_slo = o.value("e2el_s", s.e2el_slo);
      return s;
    }
    if (type == "besteffort") {
      BestEffort s;
      s.default_deadline = o.value("e2el_s", s.default_deadline);
      return s;
    }
  } catch (const json::exception& e) {
    throw Error(Errc::kInvalidSlo, e.what());
  }
  throw Error(Errc::kInvalidSlo, "unknown request type '" + type + "'");
}

}  // namespace gmax
