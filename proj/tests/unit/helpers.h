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

#include <string>
#include <vector>

#include "gmax/core.h"

namespace gmax::testing {

inline Request deadline_request(RequestId id, Seconds arrival, int in, int out, Seconds e2el) {
  Request r;
  r.id = id;
  r.arrival = arrival;
  r.input_len = in;
  r.true_output_len = out;
  r.slo = DeadlineSensitive{e2el};
  return r;
}

inline Request latency_request(RequestId id, Seconds arrival, int in, int out, Seconds ttft,
                               Seconds tbt) {
  Request r = deadline_request(id, arrival, in, out, 1.0);
  r.slo = LatencySensitive{ttft, tbt};
  return r;
}

inline StageNode llm_node(int in, int out, int model = 0) {
  StageNode n;
  n.call = LlmCall{model, in, out};
  return n;
}

inline StageNode tool_node(int tool, Seconds t) {
  StageNode n;
  n.call = ToolCall{tool, t};
  return n;
}

// llm(in0,out0) -> tool(t) -> llm(in1,out1), a 3-stage chain.
inline StageGraph chain_graph(int in0, int out0, Seconds tool_t, int in1, int out1) {
  StageGraph g;
  g.nodes = {llm_node(in0, out0), tool_node(1, tool_t), llm_node(in1, out1)};
  g.edges = {{0, 1}, {1, 2}};
  assign_stages(g);
  return g;
}

inline Request compound_request(RequestId id, Seconds arrival, StageGraph g, Seconds e2el) {
  Request r;
  r.id = id;
  r.arrival = arrival;
  r.input_len = g.total_input_len();
  r.true_output_len = g.total_output_len();
  r.stage_graph = std::move(g);
  r.slo = Compound{e2el};
  r.app_tag = "chatbot-compound";
  return r;
}

}  // namespace gmax::testing
