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

#include <nlohmann/json.hpp>

#include "gmax/core.h"

namespace gmax {

// Wire form of a stage graph, shared by traces and pattern stores:
// {"nodes":[{"kind":"llm","model":0,"input_len":..,"output_len":..} |
//           {"kind":"tool","tool":3,"exec_s":1.5}], "edges":[[p,c],...]}
// Stage indices are recomputed from the edges on read.
nlohmann::json stage_graph_to_json(const StageGraph& graph);
StageGraph stage_graph_from_json(const nlohmann::json& j);

// SLO wire form: a type name ("latency" | "deadline" | "compound" |
// "besteffort") plus {"ttft_s","tbt_s"} or {"e2el_s"}. Missing fields take
// the class defaults.
const char* slo_type_name(SloKind kind);
nlohmann::json slo_to_json(const SloClass& slo);
SloClass slo_from_json(const std::string& type, const nlohmann::json& j);

}  // namespace gmax
