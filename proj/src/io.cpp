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

#include "gmax/io.h"

#include <fstream>
#include <sstream>
#include <unordered_set>

#include "gmax/json_io.h"

namespace gmax {

using nlohmann::json;

json request_to_json(const Request& req) {
  json j = {{"id", req.id},
            {"arrival_s", req.arrival},
            {"type", slo_type_name(slo_kind(req.slo))},
            {"input_len", req.input_len},
            {"output_len", req.true_output_len},
            {"slo", slo_to_json(req.slo)},
            {"app_tag", req.app_tag}};
  if (req.stage_graph) j["stages"] = stage_graph_to_json(*req.stage_graph);
  if (req.weights.input != 1.0 || req.weights.output != 1.0) {
    j["weights"] = {req.weights.input, req.weights.output};
  }
  return j;
}

Request request_from_json(const json& j) {
  Request r;
  try {
    r.id = j.at("id").get<RequestId>();
    r.arrival = j.at("arrival_s").get<double>();
    r.input_len = j.at("input_len").get<int>();
    r.true_output_len = j.at("output_len").get<int>();
    r.slo = slo_from_json(j.at("type").get<std::string>(), j.value("slo", json::object()));
    r.app_tag = j.value("app_tag", std::string("default"));
    if (j.contains("stages")) r.stage_graph = stage_graph_from_json(j.at("stages"));
    if (j.contains("weights")) {
      r.weights = {j.at("weights").at(0).get<double>(), j.at("weights").at(1).get<double>()};
    }
  } catch (const json::exception& e) {
    throw Error(Errc::kInvalidTrace, std::string("malformed trace record: ") + e.what());
  } catch (const Error& e) {
    throw Error(Errc::kInvalidTrace, e.what());
  }
  if (!(r.arrival >= 0.0)) throw Error(Errc::kInvalidTrace, "arrival must be >= 0");
  if (auto err = validate_request(r)) {
    throw Error(Errc::kInvalidTrace, "request " + std::to_string(r.id) + ": " + err->what());
  }
  return r;
}

std::string trace_to_jsonl(const std::vector<Request>& trace) {
  std::string out;
  for (const auto& r : trace) {
    out += request_to_json(r).dump();
    out += '\n';
  }
  return out;
}

std::vector<Request> trace_from_jsonl(const std::string& text) {
  std::vector<Request> out;
  std::unordered_set<RequestId> ids;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw Error(Errc::kInvalidTrace, "line " + std::to_string(lineno) + ": " + e.what());
    }
    Request r = request_from_json(j);
    if (!out.empty() && r.arrival < out.back().arrival) {
      throw Error(Errc::kInvalidTrace, "line " + std::to_string(lineno) + ": arrivals must be nondecreasing");
    }
    if (!ids.insert(r.id).second) {
      throw Error(Errc::kInvalidTrace, "line " + std::to_string(lineno) + ": duplicate id");
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::kIoError, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::kIoError, "cannot write " + path);
  out << content;
  if (!out) throw Error(Errc::kIoError, "write failed for " + path);
}

std::vector<Request> read_trace(const std::string& path) { return trace_from_jsonl(read_file(path)); }

void write_trace(const std::string& path, const std::vector<Request>& trace) {
  write_file(path, trace_to_jsonl(trace));
}

// ---------------------------------------------------------------------------
// Run config
// ---------------------------------------------------------------------------

ShareMode parse_share_mode(const std::string& name) {
  if (name == "cumulative") return ShareMode::kCumulativeShare;
  if (name == "per_stage") return ShareMode::kPerStageShare;
  if (name == "remaining") return ShareMode::kRemainingShare;
  throw Error(Errc::kConfigError, "unknown share mode '" + name + "'");
}

json run_config_to_json(const RunConfig& c) {
  return {{"policy", c.policy},
          {"B", c.batch_size},
          {"p", c.cutoff},
          {"adapt_p", c.adapt_cutoff},
          {"delta_iters", c.frame_iters},
          {"delta_starve", c.delta_starve},
          {"delta_pmtn", c.delta_pmtn},
          {"f", c.fairness},
          {"K", c.power_k},
          {"q", c.quantile},
          {"waiting_time_s", c.waiting_time_s},
          {"io_bandwidth", c.io_bandwidth},
          {"cost",
           {{"c0_s", c.cost.c0},
            {"c_att_s", c.cost.c_att},
            {"c_lin_s", c.cost.c_lin},
            {"prefill_chunk", c.cost.prefill_chunk}}},
          {"replicas", c.replicas},
          {"v_token_s", c.v_token_s},
          {"seed", c.seed},
          {"goodput",
           {{"level", c.goodput.level == GoodputLevel::kTokenLevel ? "token" : "request"},
            {"weights", {c.goodput.weights.input, c.goodput.weights.output}}}},
          {"slo_scale", c.slo_scale},
          {"length_source", c.length_source},
          {"forest", c.forest_path},
          {"training_requests", c.training_requests},
          {"share_mode", c.share_mode}};
}

RunConfig run_config_from_json(const json& j) {
  if (!j.is_object()) throw Error(Errc::kConfigError, "config must be a JSON object");
  static const std::unordered_set<std::string> known = {
      "policy", "B", "p", "adapt_p", "delta_iters", "delta_starve", "delta_pmtn", "f", "K", "q",
      "waiting_time_s", "io_bandwidth", "cost", "replicas", "v_token_s", "seed", "goodput",
      "slo_scale", "length_source", "forest", "training_requests", "share_mode"};
  for (const auto& [k, v] : j.items()) {
    if (!known.count(k)) throw Error(Errc::kConfigError, "unknown config key '" + k + "'");
  }
  RunConfig c;
  try {
    c.policy = j.value("policy", c.policy);
    c.batch_size = j.value("B", c.batch_size);
    c.cutoff = j.value("p", c.cutoff);
    c.adapt_cutoff = j.value("adapt_p", c.adapt_cutoff);
    c.frame_iters = j.value("delta_iters", c.frame_iters);
    c.delta_starve = j.value("delta_starve", c.delta_starve);
    c.delta_pmtn = j.value("delta_pmtn", c.delta_pmtn);
    c.fairness = j.value("f", c.fairness);
    c.power_k = j.value("K", c.power_k);
    c.quantile = j.value("q", c.quantile);
    c.waiting_time_s = j.value("waiting_time_s", c.waiting_time_s);
    c.io_bandwidth = j.value("io_bandwidth", c.io_bandwidth);
    if (j.contains("cost")) {
      const auto& jc = j.at("cost");
      c.cost.c0 = jc.value("c0_s", c.cost.c0);
      c.cost.c_att = jc.value("c_att_s", c.cost.c_att);
      c.cost.c_lin = jc.value("c_lin_s", c.cost.c_lin);
      c.cost.prefill_chunk = jc.value("prefill_chunk", c.cost.prefill_chunk);
    }
    c.replicas = j.value("replicas", c.replicas);
    c.v_token_s = j.value("v_token_s", c.v_token_s);
    c.seed = j.value("seed", c.seed);
    if (j.contains("goodput")) {
      const auto& jg = j.at("goodput");
      const std::string level = jg.value("level", std::string("token"));
      if (level == "token") {
        c.goodput.level = GoodputLevel::kTokenLevel;
      } else if (level == "request") {
        c.goodput.level = GoodputLevel::kRequestLevel;
      } else {
        throw Error(Errc::kConfigError, "goodput level must be 'token' or 'request'");
      }
      if (jg.contains("weights")) {
        c.goodput.weights = {jg.at("weights").at(0).get<double>(), jg.at("weights").at(1).get<double>()};
      }
    }
    c.slo_scale = j.value("slo_scale", c.slo_scale);
    c.length_source = j.value("length_source", c.length_source);
    c.forest_path = j.value("forest", c.forest_path);
    c.training_requests = j.value("training_requests", c.training_requests);
    c.share_mode = j.value("share_mode", c.share_mode);
  } catch (const json::exception& e) {
    throw Error(Errc::kConfigError, std::string("bad config value: ") + e.what());
  }
  if (c.batch_size < 1) throw Error(Errc::kConfigError, "B must be >= 1");
  if (c.replicas < 1) throw Error(Errc::kConfigError, "replicas must be >= 1");
  if (c.power_k > c.replicas) throw Error(Errc::kConfigError, "K must not exceed the replica count");
  if (!(c.slo_scale > 0.0)) throw Error(Errc::kConfigError, "slo_scale must be positive");
  if (!(c.v_token_s > 0.0)) throw Error(Errc::kConfigError, "v_token_s must be positive");
  if (c.length_source != "qrf" && c.length_source != "oracle") {
    throw Error(Errc::kConfigError, "length_source must be 'qrf' or 'oracle'");
  }
  if (c.training_requests < 100) throw Error(Errc::kConfigError, "training_requests must be >= 100");
  parse_policy(c.policy);
  parse_share_mode(c.share_mode);
  validate_goodput_spec(c.goodput);
  return c;
}

RunConfig read_run_config(const std::string& path) {
  const std::string text = read_file(path);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(Errc::kConfigError, std::string("config is not valid JSON: ") + e.what());
  }
  return run_config_from_json(j);
}

EngineConfig to_engine_config(const RunConfig& c, std::shared_ptr<const QuantileForest> forest) {
  EngineConfig e;
  e.policy = parse_policy(c.policy);
  e.cutoff = c.cutoff;
  e.adapt_cutoff = c.adapt_cutoff;
  e.frame_iters = c.frame_iters;
  e.delta_starve = c.delta_starve;
  e.delta_pmtn = c.delta_pmtn;
  e.fairness = c.fairness;
  e.power_k = c.power_k;
  e.quantile = c.quantile;
  e.waiting_time = c.waiting_time_s;
  e.io_bandwidth = c.io_bandwidth;
  e.cost = c.cost;
  e.replicas.clear();
  for (int i = 0; i < c.replicas; ++i) e.replicas.push_back(ModelReplica{i, c.v_token_s, c.batch_size, 1.0});
  e.seed = c.seed;
  e.weights = c.goodput.weights;
  e.length_source = c.length_source == "oracle" ? LengthSource::kOracle : LengthSource::kQrf;
  e.forest = std::move(forest);
  e.share_mode = parse_share_mode(c.share_mode);
  validate_config(e);
  return e;
}

}  // namespace gmax
