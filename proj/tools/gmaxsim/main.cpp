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

#include <iostream>

#include <CLI11.hpp>

#include "gmax/cli.h"

int main(int argc, char** argv) {
  CLI::App app{"Goodput-oriented LLM serving simulator"};
  app.require_subcommand(1);

  gmax::WorkloadParams gen;
  std::string gen_out = "trace.jsonl";
  auto* g = app.add_subcommand("gen", "Generate a synthetic workload trace (JSONL)");
  g->add_option("--kind", gen.kind, "chatbot | deepresearch | mixed | poisson | edf_adv | sjf_adv");
  g->add_option("--count", gen.count, "Number of requests");
  g->add_option("--seed", gen.seed, "Random seed");
  g->add_option("--rate", gen.rate, "Mean arrivals per second");
  g->add_flag("--bursty", gen.bursty, "On/off modulated arrivals");
  g->add_option("--burst-ratio", gen.burst_ratio, "Peak to trough arrival rate");
  g->add_option("--out", gen_out, "Output path");

  std::string trace_path, config_path, run_out = "run";
  std::string policy, length_source, forest;
  double slo_scale = 0.0;
  std::int64_t run_seed = -1;
  auto* r = app.add_subcommand("run", "Simulate a trace under one policy");
  r->add_option("--trace", trace_path, "Trace file (JSONL)")->required();
  r->add_option("--config", config_path, "Run config (JSON)");
  r->add_option("--policy", policy, "gmax | fcfs | edf | sjf_oracle | ltr | plas");
  r->add_option("--seed", run_seed, "Seed override");
  r->add_option("--slo-scale", slo_scale, "Multiply every SLO by this factor");
  r->add_option("--length-source", length_source, "qrf | oracle");
  r->add_option("--forest", forest, "Saved forest (JSON)");
  r->add_option("--out", run_out, "Output prefix");

  gmax::AnalyzeParams ap;
  std::string analyze_out = "analysis.json";
  auto* a = app.add_subcommand("analyze", "Adversarial traces, oracle cross-check and bound search");
  a->add_option("--T", ap.T);
  a->add_option("--N", ap.N);
  a->add_option("--M", ap.M);
  a->add_option("--grid", ap.grid, "Grid points per axis");
  a->add_option("--instances", ap.oracle_instances, "Random instances for the oracle check");
  a->add_option("--seed", ap.seed);
  a->add_option("--out", analyze_out);

  std::vector<std::string> results;
  std::string report_out = "comparison.csv";
  auto* rep = app.add_subcommand("report", "Compare simulation results as a flat CSV");
  rep->add_option("results", results, "Result JSON files");
  rep->add_option("--out", report_out);

  CLI11_PARSE(app, argc, argv);

  try {
    if (g->parsed()) {
      gmax::cmd_gen(gen, gen_out);
    } else if (r->parsed()) {
      gmax::RunConfig cfg = config_path.empty() ? gmax::RunConfig{} : gmax::read_run_config(config_path);
      auto j = gmax::run_config_to_json(cfg);
      if (!policy.empty()) j["policy"] = policy;
      if (run_seed >= 0) j["seed"] = run_seed;
      if (slo_scale > 0.0) j["slo_scale"] = slo_scale;
      if (!length_source.empty()) j["length_source"] = length_source;
      if (!forest.empty()) j["forest"] = forest;
      cfg = gmax::run_config_from_json(j);
      const auto out = gmax::cmd_run(trace_path, cfg, run_out);
      std::cout << gmax::report_to_csv(out.report);
    } else if (a->parsed()) {
      gmax::cmd_analyze(ap, analyze_out);
    } else if (rep->parsed()) {
      gmax::cmd_report(results, report_out);
    }
  } catch (const gmax::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
