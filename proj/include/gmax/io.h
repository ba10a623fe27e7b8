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

#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gmax/core.h"
#include "gmax/engine.h"
#include "gmax/metrics.h"

namespace gmax {

// One trace line:
// {"id","arrival_s","type","input_len","output_len","slo":{...},"app_tag",
//  "stages"?: <stage graph>, "weights"?: [w_i, w_o]}
nlohmann::json request_to_json(const Request& req);
// Throws kInvalidTrace on malformed lines or requests that fail validation.
Request request_from_json(const nlohmann::json& j);

std::string trace_to_jsonl(const std::vector<Request>& trace);
// Also checks that arrivals are nondecreasing and ids unique.
std::vector<Request> trace_from_jsonl(const std::string& text);

std::string read_file(const std::string& path);  // kIoError
void write_file(const std::string& path, const std::string& content);
std::vector<Request> read_trace(const std::string& path);
void write_trace(const std::string& path, const std::vector<Request>& trace);

// Flat, file-level run configuration (JSON). Unknown keys are rejected.
struct RunConfig {
  std::string policy = "gmax";
  int batch_size = 32;
  double cutoff = 0.95;
  bool adapt_cutoff = false;
  int frame_iters = 50;
  double delta_starve = 1.0;
  double delta_pmtn = 0.10;
  double fairness = 0.0;
  int power_k = 1;
  double quantile = 0.95;
  double waiting_time_s = 5.0;
  double io_bandwidth = 1e6;
  CostModel cost;
  int replicas = 1;
  double v_token_s = 0.005;  // initial per-token latency estimate
  std::uint64_t seed = 0;
  GoodputSpec goodput;
  double slo_scale = 1.0;
  std::string length_source = "qrf";  // "qrf" | "oracle"
  std::string forest_path;            // empty: train on a separate synthetic set
  int training_requests = 3000;
  std::string share_mode = "cumulative";  // "cumulative" | "per_stage" | "remaining"
};

nlohmann::json run_config_to_json(const RunConfig& c);
// Missing keys keep their defaults. Throws kConfigError.
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig read_run_config(const std::string& path);

ShareMode parse_share_mode(const std::string& name);

// Engine settings for `c`; `forest` is required when the length source is qrf.
EngineConfig to_engine_config(const RunConfig& c, std::shared_ptr<const QuantileForest> forest);

}  // namespace gmax
