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

#include "gmax/workload.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gmax/analysis.h"

namespace gmax {

AppLengths chatbot_lengths() { return {{93, 244}, {318, 313}, {1300, 912}, {4458, 1176}}; }
AppLengths deepresearch_lengths() { return {{1911, 2781}, {534, 644}, {12223, 8407}, {3541, 2370}}; }

MomentLognormal MomentLognormal::from_moments(LengthStats s) {
  const double var_ratio = (s.std * s.std) / (s.mean * s.mean);
  MomentLognormal d;
  d.sigma = std::sqrt(std::log1p(var_ratio));
  d.mu = std::log(s.mean) - 0.5 * d.sigma * d.sigma;
  return d;
}

const std::vector<std::string>& workload_kinds() {
  static const std::vector<std::string> kinds = {"chatbot", "deepresearch", "mixed",
                                                 "poisson", "edf_adv", "sjf_adv"};
  return kinds;
}

namespace {

constexpr int kMinStages = 2;
constexpr int kMaxStages = 8;
constexpr int kToolKinds = 4;

std::uint64_t fnv1a(const std::string& s, std::uint64_t salt) {
  std::uint64_t h = 1469598103934665603ULL ^ salt;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

// Splits `total` into parts proportional to `weights`, each >= 1, summing to
// `total` exactly (largest-remainder rounding). Requires total >= parts.
std::vector<int> split_total(int total, const std::vector<double>& weights) {
  const int n = static_cast<int>(weights.size());
  std::vector<int> out(n, 1);
  int left = total - n;
  if (left <= 0 || n == 0) return out;
  const double wsum = std::accumulate(weights.begin(), weights.end(), 0.0);
  std::vector<std::pair<double, int>> frac;
  int used = 0;
  for (int k = 0; k < n; ++k) {
    const double exact = left * weights[k] / wsum;
    const int base = static_cast<int>(std::floor(exact));
    out[k] += base;
    used += base;
    frac.emplace_back(exact - base, k);
  }
  std::sort(frac.begin(), frac.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });
  for (int k = 0; k < left - used; ++k) ++out[frac[k % n].second];
  return out;
}

struct FamilyNode {
  bool llm = true;
  int tool_id = 0;
  double w_in = 1.0;
  double w_out = 1.0;
  double tool_mean = 1.0;
  std::vector<int> parents;  // indices within the previous stage
};

using Family = std::vector<std::vector<FamilyNode>>;

Family family_for(const std::string& app, int stages) {
  std::mt19937_64 rng(fnv1a(app, static_cast<std::uint64_t>(stages)));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Family fam(stages);
  for (int s = 0; s < stages; ++s) {
    const int width = s == 0 ? 1 : 1 + (unit(rng) < 0.5 ? 1 : 0);
    for (int k = 0; k < width; ++k) {
      FamilyNode n;
      const bool edge_stage = s == 0 || s == stages - 1;
      n.llm = edge_stage || unit(rng) < 0.7;
      n.tool_id = static_cast<int>(unit(rng) * kToolKinds);
      n.w_in = 0.5 + unit(rng) * 1.5;
      n.w_out = 0.5 + unit(rng) * 1.5;
      n.tool_mean = 0.5 + unit(rng) * 2.5;
      if (s > 0) {
        const int prev = static_cast<int>(fam[s - 1].size());
        if (unit(rng) < 0.5) {
          for (int p = 0; p < prev; ++p) n.parents.push_back(p);
        } else {
          n.parents.push_back(static_cast<int>(unit(rng) * prev));
        }
      }
      fam[s].push_back(n);
    }
  }
  return fam;
}

int llm_count(const Family& fam) {
  int c = 0;
  for (const auto& st : fam) {
    for (const auto& n : st) c += n.llm ? 1 : 0;
  }
  return c;
}

struct Sampler {
  explicit Sampler(std::uint64_t seed) : rng(seed) {}

  // Correlated lognormal pair via a Gaussian copula.
  std::pair<double, double> pair(const LengthStats& in, const LengthStats& out, double rho) {
    const double z1 = normal(rng), z2 = normal(rng);
    const double zo = rho * z1 + std::sqrt(1.0 - rho * rho) * z2;
    return {MomentLognormal::from_moments(in).at(z1), MomentLognormal::from_moments(out).at(zo)};
  }

  std::mt19937_64 rng;
  std::normal_distribution<double> normal{0.0, 1.0};
};

int clamp_len(double v, int lo, int hi) {
  return std::clamp(static_cast<int>(std::llround(v)), lo, hi);
}

std::vector<double> arrivals(const WorkloadParams& p, std::mt19937_64& rng) {
  std::vector<double> out;
  out.reserve(p.count);
  std::exponential_distribution<double> gap(1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const bool bursty = p.bursty || p.kind == "mixed";
  // On/off halves of each period; the mean rate is p.rate either way.
  const double hi = 2.0 * p.burst_ratio / (p.burst_ratio + 1.0) * p.rate;
  const double lo = 2.0 / (p.burst_ratio + 1.0) * p.rate;
  double t = 0.0;
  while (static_cast<int>(out.size()) < p.count) {
    if (!bursty) {
      t += gap(rng) / p.rate;
      out.push_back(t);
      continue;
    }
    t += gap(rng) / hi;  // thinning against the peak rate
    const bool on = std::fmod(t, p.burst_period_s) < 0.5 * p.burst_period_s;
    if (unit(rng) < (on ? hi : lo) / hi) out.push_back(t);
  }
  // Microsecond grid so traces round-trip through the simulator exactly.
  for (auto& a : out) a = std::round(a * 1e6) / 1e6;
  return out;
}

Request single_request(const std::string& app, const AppLengths& lens, bool latency,
                       const WorkloadParams& p, Sampler& s) {
  Request r;
  const auto [in, out] = s.pair(lens.single_input, lens.single_output, p.length_correlation);
  r.input_len = clamp_len(in, 1, p.max_input_len);
  r.true_output_len = clamp_len(out, 1, p.max_output_len);
  r.app_tag = app;
  if (latency) {
    r.slo = LatencySensitive{2.0, 0.1};
  } else {
    r.slo = DeadlineSensitive{20.0};
  }
  return r;
}

Request compound_request(const std::string& app, const AppLengths& lens, const WorkloadParams& p,
                         Sampler& s) {
  std::uniform_int_distribution<int> stage_pick(kMinStages, kMaxStages);
  const int stages = stage_pick(s.rng);
  const auto [in, out] = s.pair(lens.compound_input, lens.compound_output, p.length_correlation);
  Request r;
  r.app_tag = app + "-compound";
  r.stage_graph = make_compound_graph(app, stages, clamp_len(in, 1, 4 * p.max_input_len),
                                      clamp_len(out, 1, 4 * p.max_output_len), s.rng);
  r.input_len = r.stage_graph->total_input_len();
  r.true_output_len = r.stage_graph->total_output_len();
  r.slo = Compound{20.0 * stages};
  return r;
}

}  // namespace

StageGraph make_compound_graph(const std::string& app, int stages, int total_input, int total_output,
                               std::mt19937_64& rng) {
  if (stages < 1) throw Error(Errc::kInvalidArgument, "need at least one stage");
  const Family fam = family_for(app, stages);
  const int n_llm = llm_count(fam);
  total_input = std::max(total_input, n_llm);
  total_output = std::max(total_output, n_llm);

  std::lognormal_distribution<double> noise(0.0, 0.3);
  std::vector<double> w_in, w_out;
  for (const auto& st : fam) {
    for (const auto& n : st) {
      if (!n.llm) continue;
      w_in.push_back(n.w_in * noise(rng));
      w_out.push_back(n.w_out * noise(rng));
    }
  }
  const auto ins = split_total(total_input, w_in);
  const auto outs = split_total(total_output, w_out);

  StageGraph g;
  std::vector<int> prev_ids;
  int llm_idx = 0;
  for (int s = 0; s < stages; ++s) {
    std::vector<int> ids;
    for (const auto& fn : fam[s]) {
      StageNode node;
      node.stage = s;
      if (fn.llm) {
        node.call = LlmCall{0, ins[llm_idx], outs[llm_idx]};
        ++llm_idx;
      } else {
        const double t = fn.tool_mean * noise(rng);
        node.call = ToolCall{fn.tool_id, std::round(t * 1e3) / 1e3};
      }
      const int id = static_cast<int>(g.nodes.size());
      g.nodes.push_back(node);
      for (int p : fn.parents) g.edges.emplace_back(prev_ids[p], id);
      ids.push_back(id);
    }
    prev_ids = std::move(ids);
  }
  assign_stages(g);
  return g;
}

std::vector<Request> generate_workload(const WorkloadParams& p) {
  const auto& kinds = workload_kinds();
  if (std::find(kinds.begin(), kinds.end(), p.kind) == kinds.end()) {
    throw Error(Errc::kUnknownKind, "unknown workload kind '" + p.kind + "'");
  }
  if (p.count < 0) throw Error(Errc::kInvalidArgument, "count must be >= 0");
  if (p.kind == "edf_adv" || p.kind == "sjf_adv") {
    const int n = std::max(1, p.count - 1);
    auto adv = p.kind == "edf_adv" ? edf_adversary(10.0, n, 100.0) : sjf_adversary(10.0, n, 100.0);
    return adv.requests;
  }
  if (!(p.rate > 0.0)) throw Error(Errc::kInvalidArgument, "arrival rate must be positive");

  Sampler s(p.seed);
  std::mt19937_64 arrival_rng(p.seed ^ 0x9e3779b97f4a7c15ULL);
  const auto times = arrivals(p, arrival_rng);
  const auto chat = chatbot_lengths();
  const auto research = deepresearch_lengths();
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  std::vector<Request> out;
  out.reserve(p.count);
  for (int i = 0; i < p.count; ++i) {
    Request r;
    if (p.kind == "chatbot") {
      r = single_request("chatbot", chat, unit(s.rng) < 0.5, p, s);
    } else if (p.kind == "deepresearch") {
      r = compound_request("deepresearch", research, p, s);
    } else {
      // 1:1:1 latency : deadline : compound, apps split evenly.
      const int pattern = std::min(2, static_cast<int>(unit(s.rng) * 3.0));
      const bool research_app = unit(s.rng) < 0.5;
      const std::string app = research_app ? "deepresearch" : "chatbot";
      const AppLengths& lens = research_app ? research : chat;
      r = pattern == 2 ? compound_request(app, lens, p, s) : single_request(app, lens, pattern == 0, p, s);
    }
    r.id = static_cast<RequestId>(i);
    r.arrival = times[i];
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<TrainingSample> training_rows(const std::vector<Request>& trace, int refine_interval) {
  std::vector<TrainingSample> rows;
  for (const auto& r : trace) {
    if (r.stage_graph) {
      for (const auto& n : r.stage_graph->nodes) {
        if (!n.is_llm()) continue;
        FeatureVector f;
        f.input_len = n.llm().input_len;
        f.app_tag = r.app_tag;
        f.stage_index = n.stage;
        f.model_id = n.llm().model_id;
        append_training_rows(f, n.llm().output_len, refine_interval, rows);
      }
    } else {
      append_training_rows(features_of(r), r.true_output_len, refine_interval, rows);
    }
  }
  return rows;
}

QuantileForest train_default_forest(std::uint64_t seed, int n_requests, ForestParams params) {
  WorkloadParams wp;
  wp.kind = "poisson";
  wp.count = n_requests;
  wp.seed = seed ^ 0x5bd1e995ULL;
  const auto rows = training_rows(generate_workload(wp));
  params.seed = seed;
  return fit_forest(rows, params);
}

}  // namespace gmax
