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

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gmax/io.h"
#include "gmax/workload.h"

namespace gmax {

// Directory used when an output path is relative and GMAX_OUT_DIR is set.
std::string resolve_output(const std::string& path);

// Writes a JSONL trace. Throws kUnknownKind.
void cmd_gen(const WorkloadParams& params, const std::string& out_path);

struct RunOutputs {
  SimResult result;
  GoodputReport report;
};

// Simulates `trace` under `config`: SLOs are scaled by slo_scale first, the
// forest is loaded or trained when the length source is qrf.
RunOutputs run_trace(std::vector<Request> trace, const RunConfig& config);

// Reads everything before writing anything: on error no output appears.
// Writes <out_prefix>.result.json, <out_prefix>.report.csv and
// <out_prefix>.report.json.
RunOutputs cmd_run(const std::string& trace_path, const RunConfig& config, const std::string& out_prefix);

struct AnalyzeParams {
  double T = 10.0;
  int N = 9;
  double M = 100.0;
  int grid = 200;
  int oracle_instances = 50;
  std::uint64_t seed = 0;
};

nlohmann::json analyze_report(const AnalyzeParams& params);
void cmd_analyze(const AnalyzeParams& params, const std::string& out_path);

// Rows "policy,metric,value,goodput_ratio" for every result; the ratio is the
// policy's total goodput over the best total goodput. Throws kSchemaMismatch
// on empty input or results over different request sets.
std::string comparison_csv(const std::vector<SimResult>& results, const GoodputSpec& spec = {});
void cmd_report(const std::vector<std::string>& result_paths, const std::string& out_path);

}  // namespace gmax
