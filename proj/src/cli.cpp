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

#include "gmax/cli.h"

#include <cstdlib>
#include <filesystem>
#include <random>
#include <set>
#include <sstream>

#include "gmax/analysis.h"

namespace gmax {

std::string resolve_output(const std::string& path) {
  namespace fs = std::filesystem;
  const char* dir = std::getenv("GMAX_OUT_DIR");
  if (!dir || !*dir || fs::path(path).is_absolute()) return path;
  fs::create_directories(dir);
  return (fs::path(dir) / path).string();
}

void cmd_gen(const WorkloadParams& params, const std::string& out_path) {
  const auto trace = generate_workload(params);
  write_trace(resolve_output(out_path), trace);
}

RunOutputs run_trace(std::vector<Request> trace, const RunConfig& config) {
  if (config.slo_scale != 1.0) {
    for (auto& r : trace) r.slo = scale_slo(r.slo, config.slo_scale);
  }
  std::shared_ptr<const QuantileForest> forest;
  if (config.length_source == "qrf") {
    if (!config.forest_path.empty()) {
      forest = std::make_shared<QuantileForest>(QuantileForest::load(config.forest_path));
    } else {
      forest = std::make_shared<QuantileForest>(
          train_default_forest(config.seed + 7919, config.training_requests));
    }
  }
  const EngineConfig engine = to_engine_config(config, forest);
  RunOutputs out;
  out.result = run(std::move(trace), engine);
  out.report = make_report(out.result, config.goodput);
  return out;
}

RunOutputs cmd_run(const std::string& trace_path, const RunConfig& config, const std::string& out_prefix) {
  auto trace = read_trace(trace_path);
  RunOutputs out = run_trace(std::move(trace), config);
  const std::string prefix = resolve_output(out_prefix);
  write_file(prefix + ".result.json", dump_result(out.result));
  write_file(prefix + ".report.csv", report_to_csv(out.report));
  write_file(prefix + ".report.json", report_to_json(out.report).dump(2));
  return out;
}

namespace {

nlohmann::json adversary_block(const AdversaryTrace& adv, PolicyKind baseline) {
  const double base = simulate_instance(adv.instance, baseline, adv.v_token);
  const double gmax = simulate_instance(adv.instance, PolicyKind::kGmax, adv.v_token);
  const double opt = oracle_schedule(adv.instance).goodput;
  return {{"T", adv.T},
          {"N", adv.N},
          {"M", adv.M},
          {"delta", adv.delta},
          {"baseline", policy_name(baseline)},
          {"baseline_goodput", base},
          {"gmax_goodput", gmax},
          {"oracle_goodput", opt},
          {"ratio", base > 0.0 ? opt / base : 0.0}};
}

nlohmann::json bound_block(const BoundOptimum& b, double reference) {
  return {{"value", b.value},
          {"inverse", 1.0 / b.value},
          {"reference", reference},
          {"relative_gap", (b.value - reference) / reference},
          {"argmax",
           {{"delta_pmtn", b.argmax.delta_pmtn},
            {"alpha", b.argmax.alpha},
            {"beta", b.argmax.beta},
            {"gamma", b.argmax.gamma},
            {"p", b.argmax.p}}}};
}

}  // namespace

nlohmann::json analyze_report(const AnalyzeParams& params) {
  const auto edf = edf_adversary(params.T, params.N, params.M);
  const auto sjf = sjf_adversary(params.T, params.N, params.M);
  const auto edf_j = adversary_block(edf, PolicyKind::kEdf);
  const auto sjf_j = adversary_block(sjf, PolicyKind::kSjfOracle);

  const auto b1 = optimize_bound(1.0, params.grid);
  const auto b95 = optimize_bound(0.95, params.grid);
  const auto b_fixed = optimize_bound(1.0, params.grid, 0.1);

  // Oracle cross-check on random small instances.
  std::mt19937_64 rng(params.seed);
  const Seconds v = 1e-3;
  int violations = 0;
  double ratio_sum = 0.0;
  int ratio_n = 0;
  const PolicyKind policies[] = {PolicyKind::kGmax, PolicyKind::kFcfs, PolicyKind::kEdf,
                                 PolicyKind::kSjfOracle, PolicyKind::kPlas};
  for (int k = 0; k < params.oracle_instances; ++k) {
    const auto inst = random_instance(rng, 10, 2, v);
    const double opt = oracle_schedule(inst).goodput;
    for (PolicyKind pk : policies) {
      const double g = simulate_instance(inst, pk, v, params.seed + k);
      if (g > opt + 1e-9) ++violations;
      if (pk == PolicyKind::kGmax && opt > 0.0) {
        ratio_sum += g / opt;
        ++ratio_n;
      }
    }
  }

  return {{"edf", edf_j},
          {"sjf", sjf_j},
          {"edf_ratio", edf_j["ratio"]},
          {"sjf_ratio", sjf_j["ratio"]},
          {"bound_p1", b1.value},
          {"bound_p095", b95.value},
          {"argmax", {{"p1", bound_block(b1, 1.0 / 8.13)}, {"p095", bound_block(b95, 1.0 / 8.557)}}},
          {"bound_fixed_delta_0_1", b_fixed.value},
          {"oracle_crosscheck",
           {{"instances", params.oracle_instances},
            {"violations", violations},
            {"gmax_mean_fraction_of_oracle", ratio_n ? ratio_sum / ratio_n : 1.0}}},
          {"seed", params.seed}};
}

void cmd_analyze(const AnalyzeParams& params, const std::string& out_path) {
  const auto report = analyze_report(params);
  write_file(resolve_output(out_path), report.dump(2));
}

std::string comparison_csv(const std::vector<SimResult>& results, const GoodputSpec& spec) {
  if (results.empty()) throw Error(Errc::kSchemaMismatch, "no results to compare");
  auto ids = [](const SimResult& r) {
    std::set<RequestId> s;
    for (const auto& q : r.requests) s.insert(q.id);
    return s;
  };
  const auto first = ids(results.front());
  std::vector<GoodputReport> reports;
  double best = 0.0;
  for (const auto& r : results) {
    if (ids(r) != first) throw Error(Errc::kSchemaMismatch, "results cover different request sets");
    reports.push_back(make_report(r, spec));
    best = std::max(best, reports.back().total_goodput);
  }
  std::ostringstream out;
  out.precision(10);
  out << "policy,metric,value,goodput_ratio\n";
  for (const auto& rep : reports) {
    const double ratio = best > 0.0 ? rep.total_goodput / best : 0.0;
    for (const auto& [k, v] : report_rows(rep)) out << rep.policy << ',' << k << ',' << v << ',' << ratio << '\n';
  }
  return out.str();
}

void cmd_report(const std::vector<std::string>& result_paths, const std::string& out_path) {
  std::vector<SimResult> results;
  for (const auto& p : result_paths) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(read_file(p));
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::kSchemaMismatch, p + ": " + e.what());
    }
    results.push_back(sim_result_from_json(j));
  }
  const std::string csv = comparison_csv(results);
  write_file(resolve_output(out_path), csv);
}

}  // namespace gmax
