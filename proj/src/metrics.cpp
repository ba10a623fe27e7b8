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

#include "gmax/metrics.h"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "gmax/json_io.h"

namespace gmax {

void validate_goodput_spec(const GoodputSpec& spec) {
  const auto& w = spec.weights;
  if (w.input < 0.0 || w.output < 0.0 || (w.input == 0.0 && w.output == 0.0)) {
    throw Error(Errc::kConfigError, "goodput weights must be >= 0 and not both zero");
  }
}

namespace {

GoodputWeights combine(const RequestRecord& r, const GoodputWeights& w) {
  return {r.weights.input * w.input, r.weights.output * w.output};
}

Micros due(Seconds t) { return to_micros(t); }

// Deadline of the k-th (0-based) token of a latency-sensitive request.
Micros token_due(const RequestRecord& r, const LatencySensitive& s, size_t k) {
  return due(r.arrival + s.ttft_slo + static_cast<double>(k) * s.tbt_slo);
}

bool completed_by(const RequestRecord& r, Seconds relative) {
  return !r.dropped && r.completion && *r.completion <= due(r.arrival + relative);
}

}  // namespace

double full_credit(const RequestRecord& r, const GoodputWeights& w) {
  const GoodputWeights cw = combine(r, w);
  if (r.is_compound()) {
    double v = 0.0;
    for (const auto& s : r.subrequests) v += cw.input * s.input_len + cw.output * s.output_len;
    return v;
  }
  if (slo_kind(r.slo) == SloKind::kLatency) return cw.output * r.output_len;
  return cw.input * r.input_len + cw.output * r.output_len;
}

double request_token_goodput(const RequestRecord& r, const GoodputWeights& w) {
  if (r.dropped) return 0.0;
  const GoodputWeights cw = combine(r, w);
  switch (slo_kind(r.slo)) {
    case SloKind::kLatency: {
      const auto& s = std::get<LatencySensitive>(r.slo);
      double g = 0.0;
      for (size_t k = 0; k < r.token_times.size(); ++k) {
        if (r.token_times[k] <= token_due(r, s, k)) g += cw.output;
      }
      return g;
    }
    case SloKind::kDeadline:
      return completed_by(r, std::get<DeadlineSensitive>(r.slo).e2el_slo) ? full_credit(r, w) : 0.0;
    case SloKind::kCompound:
      return completed_by(r, std::get<Compound>(r.slo).e2el_slo) ? full_credit(r, w) : 0.0;
    case SloKind::kBestEffort:
      return 0.0;
  }
  return 0.0;
}

bool meets_slo(const RequestRecord& r) {
  if (r.dropped || !r.completion) return false;
  switch (slo_kind(r.slo)) {
    case SloKind::kLatency: {
      const auto& s = std::get<LatencySensitive>(r.slo);
      if (static_cast<int>(r.token_times.size()) != r.output_len) return false;
      for (size_t k = 0; k < r.token_times.size(); ++k) {
        if (r.token_times[k] > token_due(r, s, k)) return false;
      }
      return true;
    }
    case SloKind::kDeadline: return completed_by(r, std::get<DeadlineSensitive>(r.slo).e2el_slo);
    case SloKind::kCompound: return completed_by(r, std::get<Compound>(r.slo).e2el_slo);
    case SloKind::kBestEffort: return completed_by(r, std::get<BestEffort>(r.slo).default_deadline);
  }
  return false;
}

double token_goodput(const SimResult& result, const GoodputSpec& spec) {
  validate_goodput_spec(spec);
  double total = 0.0;
  for (const auto& r : result.requests) total += request_token_goodput(r, spec.weights);
  return total;
}

std::size_t request_goodput(const SimResult& result) {
  return static_cast<std::size_t>(
      std::count_if(result.requests.begin(), result.requests.end(), meets_slo));
}

double nearest_rank(std::vector<double> values, double q) {
  if (values.empty()) return 0.0;
  if (!(q > 0.0 && q <= 1.0)) throw Error(Errc::kInvalidArgument, "percentile must lie in (0, 1]");
  std::sort(values.begin(), values.end());
  const auto rank = static_cast<size_t>(std::ceil(q * static_cast<double>(values.size())));
  return values[std::clamp<size_t>(rank, 1, values.size()) - 1];
}

LatencySamples latency_samples(const SimResult& result) {
  LatencySamples s;
  auto add_timeline = [&s](const std::vector<Micros>& tokens) {
    for (size_t k = 1; k < tokens.size(); ++k) s.tbt.push_back(to_seconds(tokens[k] - tokens[k - 1]));
  };
  for (const auto& r : result.requests) {
    if (r.dropped) continue;
    if (auto first = r.first_token()) s.ttft.push_back(to_seconds(*first) - r.arrival);
    if (r.is_compound()) {
      for (const auto& sub : r.subrequests) add_timeline(sub.token_times);
    } else {
      add_timeline(r.token_times);
    }
    if (r.completion) s.e2el.push_back(to_seconds(*r.completion) - r.arrival);
  }
  return s;
}

namespace {

Percentiles percentiles(const std::vector<double>& v) {
  return {nearest_rank(v, 0.5), nearest_rank(v, 0.95), v.size()};
}

}  // namespace

GoodputReport latency_stats(const SimResult& result) {
  GoodputReport rep;
  rep.policy = result.policy;
  const auto s = latency_samples(result);
  rep.ttft = percentiles(s.ttft);
  rep.tbt = percentiles(s.tbt);
  rep.e2el = percentiles(s.e2el);
  return rep;
}

GoodputReport make_report(const SimResult& result, const GoodputSpec& spec) {
  validate_goodput_spec(spec);
  GoodputReport rep = latency_stats(result);
  rep.requests = result.requests.size();
  std::int64_t tokens = 0;
  for (const auto& r : result.requests) {
    const double g = request_token_goodput(r, spec.weights);
    rep.token_goodput += g;
    rep.by_class[slo_type_name(slo_kind(r.slo))] += g;
    if (r.dropped) ++rep.drops;
    rep.preemptions += r.preemptions;
    if (r.is_compound()) {
      for (const auto& sub : r.subrequests) tokens += static_cast<std::int64_t>(sub.token_times.size());
    } else {
      tokens += static_cast<std::int64_t>(r.token_times.size());
    }
  }
  const auto met = request_goodput(result);
  rep.request_goodput = static_cast<double>(met);
  rep.attainment = rep.requests ? static_cast<double>(met) / static_cast<double>(rep.requests) : 0.0;
  rep.total_goodput = spec.level == GoodputLevel::kTokenLevel ? rep.token_goodput : rep.request_goodput;
  const Seconds span = to_seconds(result.stats.makespan);
  rep.throughput = span > 0.0 ? static_cast<double>(tokens) / span : 0.0;
  return rep;
}

SimResult scale_result_slos(SimResult result, double factor) {
  for (auto& r : result.requests) r.slo = scale_slo(r.slo, factor);
  return result;
}

std::vector<std::pair<std::string, double>> report_rows(const GoodputReport& rep) {
  std::vector<std::pair<std::string, double>> rows = {
      {"total_goodput", rep.total_goodput},
      {"token_goodput", rep.token_goodput},
      {"request_goodput", rep.request_goodput},
      {"attainment", rep.attainment},
      {"ttft_p50_s", rep.ttft.p50},
      {"ttft_p95_s", rep.ttft.p95},
      {"tbt_p50_s", rep.tbt.p50},
      {"tbt_p95_s", rep.tbt.p95},
      {"e2el_p50_s", rep.e2el.p50},
      {"e2el_p95_s", rep.e2el.p95},
      {"throughput_tok_s", rep.throughput},
      {"requests", static_cast<double>(rep.requests)},
      {"drops", static_cast<double>(rep.drops)},
      {"preemptions", static_cast<double>(rep.preemptions)},
  };
  for (const auto& [cls, g] : rep.by_class) rows.emplace_back("goodput_" + cls, g);
  return rows;
}

nlohmann::json report_to_json(const GoodputReport& rep) {
  nlohmann::json j;
  j["policy"] = rep.policy;
  for (const auto& [k, v] : report_rows(rep)) j[k] = v;
  return j;
}

std::string report_to_csv(const GoodputReport& rep) {
  std::ostringstream out;
  out.precision(10);
  out << "metric,value\n";
  for (const auto& [k, v] : report_rows(rep)) out << k << ',' << v << '\n';
  return out.str();
}

}  // namespace gmax
