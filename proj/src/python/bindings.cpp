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

#include <optional>
#include <string>
#include <vector>

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "gmax/analysis.h"
#include "gmax/cli.h"
#include "gmax/io.h"
#include "gmax/metrics.h"
#include "gmax/scheduler.h"
#include "gmax/workload.h"

namespace py = pybind11;

namespace {

// JSON crosses the boundary as text; the Python side decodes it.
std::string generate(const std::string& kind, int count, std::uint64_t seed, double rate,
                     bool bursty) {
  gmax::WorkloadParams p;
  p.kind = kind;
  p.count = count;
  p.seed = seed;
  p.rate = rate;
  p.bursty = bursty;
  return gmax::trace_to_jsonl(gmax::generate_workload(p));
}

py::tuple run_jsonl(const std::string& trace_jsonl, const std::string& config_json) {
  auto trace = gmax::trace_from_jsonl(trace_jsonl);
  nlohmann::json cj;
  try {
    cj = nlohmann::json::parse(config_json.empty() ? "{}" : config_json);
  } catch (const nlohmann::json::exception& e) {
    throw gmax::Error(gmax::Errc::kConfigError, e.what());
  }
  const auto config = gmax::run_config_from_json(cj);
  gmax::RunOutputs out;
  {
    py::gil_scoped_release release;
    out = gmax::run_trace(std::move(trace), config);
  }
  return py::make_tuple(gmax::dump_result(out.result), gmax::report_to_json(out.report).dump());
}

std::string optimize(double p, int grid, std::optional<double> fixed_delta) {
  const auto b = gmax::optimize_bound(p, grid, fixed_delta);
  nlohmann::json j = {{"value", b.value},
                      {"delta_pmtn", b.argmax.delta_pmtn},
                      {"alpha", b.argmax.alpha},
                      {"beta", b.argmax.beta},
                      {"gamma", b.argmax.gamma},
                      {"p", b.argmax.p}};
  return j.dump();
}

std::string analyze(double T, int N, double M, int grid, int oracle_instances, std::uint64_t seed) {
  gmax::AnalyzeParams p{T, N, M, grid, oracle_instances, seed};
  return gmax::analyze_report(p).dump();
}

std::vector<gmax::RequestId> select_group(const std::vector<double>& priority,
                                          const std::vector<int>& context_len,
                                          const std::vector<double>& arrival, int batch_size,
                                          double cutoff) {
  if (priority.size() != context_len.size() || priority.size() != arrival.size()) {
    throw gmax::Error(gmax::Errc::kInvalidArgument, "priority, context_len and arrival differ in length");
  }
  std::vector<gmax::RequestEstimate> queue(priority.size());
  for (size_t i = 0; i < queue.size(); ++i) {
    queue[i].id = i;
    queue[i].priority = priority[i];
    queue[i].context_len = context_len[i];
    queue[i].arrival = arrival[i];
  }
  return gmax::select_group(queue, batch_size, cutoff).selected;
}

double oracle_goodput(int n_slots, const std::vector<std::vector<double>>& requests) {
  gmax::SmallInstance inst;
  inst.n_slots = n_slots;
  for (const auto& r : requests) {
    if (r.size() != 4) throw gmax::Error(gmax::Errc::kInvalidArgument, "need (arrival, t_comp, t_slo, goodput)");
    inst.requests.push_back({r[0], r[1], r[2], r[3]});
  }
  return gmax::oracle_schedule(inst).goodput;
}

}  // namespace

PYBIND11_MODULE(_gmax, m) {
  m.doc() = "gmaxsim native core";

  // Messages carry the error code name as a prefix, e.g. "InvalidTrace: ...".
  py::register_exception<gmax::Error>(m, "GmaxError", PyExc_ValueError);

  m.def("generate", &generate, py::arg("kind") = "mixed", py::arg("count") = 1000,
        py::arg("seed") = 0, py::arg("rate") = 1.0, py::arg("bursty") = false,
        "Synthetic trace as JSONL text.");
  m.def("run", &run_jsonl, py::arg("trace_jsonl"), py::arg("config_json") = "{}",
        "Simulates a JSONL trace; returns (result_json, report_json).");
  m.def("bound_value",
        [](double delta_pmtn, double alpha, double beta, double gamma, double p) {
          gmax::BoundParams bp{delta_pmtn, alpha, beta, gamma, p};
          gmax::validate_bound_params(bp);
          return gmax::bound_value(bp);
        },
        py::arg("delta_pmtn"), py::arg("alpha"), py::arg("beta"), py::arg("gamma"), py::arg("p") = 1.0);
  m.def("optimize_bound", &optimize, py::arg("p") = 1.0, py::arg("grid") = 200,
        py::arg("fixed_delta") = py::none());
  m.def("analyze", &analyze, py::arg("T") = 10.0, py::arg("N") = 9, py::arg("M") = 100.0,
        py::arg("grid") = 200, py::arg("oracle_instances") = 50, py::arg("seed") = 0);
  m.def("select_group", &select_group, py::arg("priority"), py::arg("context_len"),
        py::arg("arrival"), py::arg("batch_size"), py::arg("cutoff") = 0.95,
        "Indices chosen by the grouped selection.");
  m.def("oracle_goodput", &oracle_goodput, py::arg("n_slots"), py::arg("requests"));
  m.def("comparison_csv", [](const std::vector<std::string>& results) {
    std::vector<gmax::SimResult> rs;
    for (const auto& r : results) rs.push_back(gmax::sim_result_from_json(nlohmann::json::parse(r)));
    return gmax::comparison_csv(rs);
  });
}
