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

#include "gmax/patterns.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

#include "gmax/json_io.h"

namespace gmax {

using nlohmann::json;

PatternGraph make_pattern(StageGraph graph, std::vector<Seconds> stage_times) {
  PatternGraph p;
  p.graph = std::move(graph);
  p.stage_times = std::move(stage_times);
  p.total_time = std::accumulate(p.stage_times.begin(), p.stage_times.end(), 0.0);
  return p;
}

PatternGraph prefix_of(const PatternGraph& full, int stages) {
  stages = std::clamp(stages, 0, full.stage_count());
  PatternGraph out;
  out.id = full.id;
  out.reuse_score = full.reuse_score;
  out.last_touch = full.last_touch;
  std::vector<int> remap(full.graph.nodes.size(), -1);
  for (size_t i = 0; i < full.graph.nodes.size(); ++i) {
    if (full.graph.nodes[i].stage < stages) {
      remap[i] = static_cast<int>(out.graph.nodes.size());
      out.graph.nodes.push_back(full.graph.nodes[i]);
    }
  }
  for (const auto& [p, c] : full.graph.edges) {
    if (remap[p] >= 0 && remap[c] >= 0) out.graph.edges.emplace_back(remap[p], remap[c]);
  }
  out.stage_times.assign(full.stage_times.begin(), full.stage_times.begin() + stages);
  out.total_time = std::accumulate(out.stage_times.begin(), out.stage_times.end(), 0.0);
  return out;
}

std::optional<Error> validate_pattern(const PatternGraph& pattern) {
  if (auto err = validate_stage_graph(pattern.graph)) return err;
  if (pattern.graph.stage_count() != pattern.stage_count()) {
    return Error(Errc::kInvalidStageGraph, "stage_times size differs from stage count");
  }
  double sum = 0.0;
  for (double t : pattern.stage_times) {
    if (!(t >= 0.0) || !std::isfinite(t)) return Error(Errc::kInvalidArgument, "bad stage time");
    sum += t;
  }
  if (std::abs(sum - pattern.total_time) > 1e-6 * std::max(1.0, std::abs(sum))) {
    return Error(Errc::kInvalidArgument, "stage times do not sum to total_time");
  }
  if (!(pattern.reuse_score >= 0.0)) return Error(Errc::kInvalidArgument, "negative reuse score");
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Compact encoding
// ---------------------------------------------------------------------------

namespace {

void put_varint(std::vector<std::uint8_t>& out, std::uint64_t v) {
  while (v >= 0x80) {
    out.push_back(static_cast<std::uint8_t>(v | 0x80));
    v >>= 7;
  }
  out.push_back(static_cast<std::uint8_t>(v));
}

std::uint64_t get_varint(const std::vector<std::uint8_t>& in, size_t& at) {
  std::uint64_t v = 0;
  for (int shift = 0; shift < 64; shift += 7) {
    if (at >= in.size()) throw Error(Errc::kSchemaMismatch, "truncated varint");
    const std::uint8_t b = in[at++];
    v |= static_cast<std::uint64_t>(b & 0x7f) << shift;
    if (!(b & 0x80)) return v;
  }
  throw Error(Errc::kSchemaMismatch, "varint too long");
}

std::uint64_t zigzag(std::int64_t v) {
  return (static_cast<std::uint64_t>(v) << 1) ^ static_cast<std::uint64_t>(v >> 63);
}
std::int64_t unzigzag(std::uint64_t v) {
  return static_cast<std::int64_t>(v >> 1) ^ -static_cast<std::int64_t>(v & 1);
}

std::uint64_t millis(double s) { return static_cast<std::uint64_t>(std::llround(std::max(s, 0.0) * 1e3)); }

}  // namespace

std::vector<std::uint8_t> encode_compact(const PatternGraph& p) {
  std::vector<std::uint8_t> out;
  const auto& nodes = p.graph.nodes;
  put_varint(out, nodes.size());
  for (size_t i = 0; i < nodes.size(); ++i) {
    const auto& node = nodes[i];
    if (node.is_llm()) {
      put_varint(out, static_cast<std::uint64_t>(node.llm().model_id) << 1);
      put_varint(out, node.llm().input_len);
      put_varint(out, node.llm().output_len);
    } else {
      put_varint(out, (static_cast<std::uint64_t>(node.tool().tool_id) << 1) | 1);
      put_varint(out, millis(node.tool().exec_time));
    }
    auto parents = p.graph.parents_of(static_cast<int>(i));
    put_varint(out, parents.size());
    for (int parent : parents) put_varint(out, zigzag(static_cast<std::int64_t>(i) - parent));
  }
  put_varint(out, p.stage_times.size());
  for (double t : p.stage_times) put_varint(out, millis(t));
  return out;
}

PatternGraph decode_compact(const std::vector<std::uint8_t>& bytes) {
  size_t at = 0;
  StageGraph graph;
  const auto n = get_varint(bytes, at);
  for (std::uint64_t i = 0; i < n; ++i) {
    StageNode node;
    const auto tag = get_varint(bytes, at);
    if (tag & 1) {
      node.call = ToolCall{static_cast<int>(tag >> 1), static_cast<double>(get_varint(bytes, at)) * 1e-3};
    } else {
      LlmCall llm;
      llm.model_id = static_cast<int>(tag >> 1);
      llm.input_len = static_cast<int>(get_varint(bytes, at));
      llm.output_len = static_cast<int>(get_varint(bytes, at));
      node.call = llm;
    }
    graph.nodes.push_back(node);
    const auto n_parents = get_varint(bytes, at);
    for (std::uint64_t k = 0; k < n_parents; ++k) {
      const auto parent = static_cast<std::int64_t>(i) - unzigzag(get_varint(bytes, at));
      graph.edges.emplace_back(static_cast<int>(parent), static_cast<int>(i));
    }
  }
  assign_stages(graph);
  std::vector<Seconds> times(get_varint(bytes, at));
  for (auto& t : times) t = static_cast<double>(get_varint(bytes, at)) * 1e-3;
  return make_pattern(std::move(graph), std::move(times));
}

// ---------------------------------------------------------------------------
// Similarity
// ---------------------------------------------------------------------------

double gaussian_similarity(double a, double b, double sigma_floor) {
  const double sigma = std::max(0.25 * std::max(std::abs(a), std::abs(b)), sigma_floor);
  const double d = a - b;
  return std::exp(-(d * d) / (2.0 * sigma * sigma));
}

namespace {

constexpr double kTokenFloor = 1.0;
constexpr double kSecondsFloor = 1e-3;

bool same_identity(const StageNode& a, const StageNode& b) {
  if (a.is_llm() != b.is_llm()) return false;
  return a.is_llm() ? a.llm().model_id == b.llm().model_id : a.tool().tool_id == b.tool().tool_id;
}

// Input length carried along an edge into `child`; nullopt for tool-to-tool.
std::optional<double> edge_load(const StageNode& parent, const StageNode& child) {
  if (child.is_llm()) return child.llm().input_len;
  if (parent.is_llm()) return parent.llm().output_len;
  return std::nullopt;
}

// Canonical position of each node: (stage, rank) with rank ordering a stage's
// nodes by (kind, identity, original index).
struct Canonical {
  std::vector<std::vector<int>> by_stage;  // node indices in canonical order
  std::vector<int> rank;                   // node -> rank within its stage
};

Canonical canonicalize(const StageGraph& g, int stages) {
  Canonical c;
  c.by_stage.resize(stages);
  c.rank.assign(g.nodes.size(), -1);
  for (int i = 0; i < static_cast<int>(g.nodes.size()); ++i) {
    if (g.nodes[i].stage < stages) c.by_stage[g.nodes[i].stage].push_back(i);
  }
  for (auto& ids : c.by_stage) {
    std::sort(ids.begin(), ids.end(), [&](int a, int b) {
      const auto& na = g.nodes[a];
      const auto& nb = g.nodes[b];
      const int ka = na.is_llm() ? 0 : 1, kb = nb.is_llm() ? 0 : 1;
      const int ia = na.is_llm() ? na.llm().model_id : na.tool().tool_id;
      const int ib = nb.is_llm() ? nb.llm().model_id : nb.tool().tool_id;
      return std::tie(ka, ia, a) < std::tie(kb, ib, b);
    });
    for (int r = 0; r < static_cast<int>(ids.size()); ++r) c.rank[ids[r]] = r;
  }
  return c;
}

using EdgeKey = std::tuple<int, int, int, int>;  // parent (stage, rank), child (stage, rank)

std::vector<std::pair<EdgeKey, std::pair<int, int>>> canonical_edges(const StageGraph& g,
                                                                      const Canonical& c,
                                                                      int stages) {
  std::vector<std::pair<EdgeKey, std::pair<int, int>>> out;
  for (const auto& [p, ch] : g.edges) {
    if (g.nodes[ch].stage >= stages) continue;
    out.push_back({{g.nodes[p].stage, c.rank[p], g.nodes[ch].stage, c.rank[ch]}, {p, ch}});
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

double node_similarity(const StageNode& a, const StageNode& b) {
  if (!same_identity(a, b)) return 0.0;
  if (a.is_llm()) return gaussian_similarity(a.llm().output_len, b.llm().output_len, kTokenFloor);
  return gaussian_similarity(a.tool().exec_time, b.tool().exec_time, kSecondsFloor);
}

double edge_similarity(const StageNode& a_parent, const StageNode& a_child,
                       const StageNode& b_parent, const StageNode& b_child) {
  if (!same_identity(a_parent, b_parent) || !same_identity(a_child, b_child)) return 0.0;
  auto la = edge_load(a_parent, a_child);
  auto lb = edge_load(b_parent, b_child);
  if (!la || !lb) return 1.0;
  return gaussian_similarity(*la, *lb, kTokenFloor);
}

std::optional<double> prefix_similarity(const PatternGraph& query, const PatternGraph& candidate,
                                        int stages) {
  if (stages < 1 || query.graph.stage_count() < stages ||
      candidate.graph.stage_count() < stages) {
    return std::nullopt;
  }
  const auto cq = canonicalize(query.graph, stages);
  const auto cc = canonicalize(candidate.graph, stages);
  double total = 0.0;
  int count = 0;
  for (int s = 0; s < stages; ++s) {
    const auto& qs = cq.by_stage[s];
    const auto& cs = cc.by_stage[s];
    if (qs.size() != cs.size()) return std::nullopt;
    for (size_t r = 0; r < qs.size(); ++r) {
      const auto& qn = query.graph.nodes[qs[r]];
      const auto& cn = candidate.graph.nodes[cs[r]];
      if (!same_identity(qn, cn)) return std::nullopt;
      total += node_similarity(qn, cn);
      ++count;
    }
  }
  const auto eq = canonical_edges(query.graph, cq, stages);
  const auto ec = canonical_edges(candidate.graph, cc, stages);
  size_t i = 0, j = 0;
  while (i < eq.size() || j < ec.size()) {
    if (j == ec.size() || (i < eq.size() && eq[i].first < ec[j].first)) {
      ++i;  // edge only in query
    } else if (i == eq.size() || ec[j].first < eq[i].first) {
      ++j;  // edge only in candidate
    } else {
      const auto [qp, qc] = eq[i].second;
      const auto [cp, cc2] = ec[j].second;
      total += edge_similarity(query.graph.nodes[qp], query.graph.nodes[qc],
                               candidate.graph.nodes[cp], candidate.graph.nodes[cc2]);
      ++i;
      ++j;
    }
    ++count;
  }
  return total / count;
}

double graph_similarity(const PatternGraph& a, const PatternGraph& b) {
  const int stages = a.graph.stage_count();
  if (stages != b.graph.stage_count() || stages == 0) return 0.0;
  return prefix_similarity(a, b, stages).value_or(0.0);
}

// ---------------------------------------------------------------------------
// Shares
// ---------------------------------------------------------------------------

const char* share_mode_name(ShareMode mode) {
  switch (mode) {
    case ShareMode::kCumulativeShare: return "cumulative";
    case ShareMode::kPerStageShare: return "per_stage";
    case ShareMode::kRemainingShare: return "remaining";
  }
  return "unknown";
}

double stage_share(const PatternGraph& pattern, int s) {
  const int n = pattern.stage_count();
  if (s < 0 || s >= n) throw Error(Errc::kInvalidArgument, "stage index out of range");
  if (s == n - 1) return 1.0;
  double upto = 0.0;
  for (int i = 0; i <= s; ++i) upto += pattern.stage_times[i];
  if (!(pattern.total_time > 0.0)) return static_cast<double>(s + 1) / n;
  return std::min(upto / pattern.total_time, 1.0);
}

double share_for_mode(const PatternGraph& pattern, int s, ShareMode mode) {
  const int n = pattern.stage_count();
  if (s < 0) throw Error(Errc::kInvalidArgument, "negative stage index");
  if (s >= n) return mode == ShareMode::kCumulativeShare ? 1.0 : 0.0;
  switch (mode) {
    case ShareMode::kCumulativeShare:
      return stage_share(pattern, s);
    case ShareMode::kPerStageShare:
      if (!(pattern.total_time > 0.0)) return 1.0 / n;
      return std::min(pattern.stage_times[s] / pattern.total_time, 1.0);
    case ShareMode::kRemainingShare: {
      double rest = 0.0;
      for (int i = s; i < n; ++i) rest += pattern.stage_times[i];
      if (!(rest > 0.0)) return 1.0 / (n - s);
      return std::min(pattern.stage_times[s] / rest, 1.0);
    }
  }
  return 1.0;
}

Seconds sub_deadline(const PatternGraph& pattern, int s, Seconds deadline, ShareMode mode) {
  if (!(deadline > 0.0)) throw Error(Errc::kInvalidArgument, "deadline must be positive");
  if (s < 0 || s >= pattern.stage_count()) {
    throw Error(Errc::kInvalidArgument, "stage index out of range");
  }
  return share_for_mode(pattern, s, mode) * deadline;
}

// ---------------------------------------------------------------------------
// PAM
// ---------------------------------------------------------------------------

double medoid_cost(const std::vector<std::vector<double>>& dist, const std::vector<int>& medoids) {
  double cost = 0.0;
  for (size_t i = 0; i < dist.size(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (int m : medoids) best = std::min(best, dist[i][m]);
    cost += best;
  }
  return cost;
}

std::vector<int> pam(const std::vector<std::vector<double>>& dist, int k) {
  const int n = static_cast<int>(dist.size());
  if (k < 1 || k > n) throw Error(Errc::kTooFewGraphs, "need 1 <= k <= n");
  std::vector<int> medoids;
  std::vector<bool> is_medoid(n, false);
  std::vector<double> nearest(n, std::numeric_limits<double>::infinity());

  // BUILD: greedily add the point that lowers total cost the most.
  for (int step = 0; step < k; ++step) {
    int best = -1;
    double best_cost = std::numeric_limits<double>::infinity();
    for (int c = 0; c < n; ++c) {
      if (is_medoid[c]) continue;
      double cost = 0.0;
      for (int i = 0; i < n; ++i) cost += std::min(nearest[i], dist[i][c]);
      if (cost < best_cost - 1e-12) {
        best_cost = cost;
        best = c;
      }
    }
    medoids.push_back(best);
    is_medoid[best] = true;
    for (int i = 0; i < n; ++i) nearest[i] = std::min(nearest[i], dist[i][best]);
  }

  // SWAP: steepest descent over (medoid, non-medoid) exchanges.
  double current = medoid_cost(dist, medoids);
  for (int iter = 0; iter < 1000; ++iter) {
    std::vector<double> d1(n), d2(n);
    std::vector<int> owner(n);
    for (int i = 0; i < n; ++i) {
      d1[i] = d2[i] = std::numeric_limits<double>::infinity();
      owner[i] = -1;
      for (int mi = 0; mi < k; ++mi) {
        const double d = dist[i][medoids[mi]];
        if (d < d1[i]) {
          d2[i] = d1[i];
          d1[i] = d;
          owner[i] = mi;
        } else if (d < d2[i]) {
          d2[i] = d;
        }
      }
    }
    double best_delta = -1e-12;
    int best_m = -1, best_o = -1;
    for (int mi = 0; mi < k; ++mi) {
      for (int o = 0; o < n; ++o) {
        if (is_medoid[o]) continue;
        double delta = 0.0;
        for (int i = 0; i < n; ++i) {
          const double to_o = dist[i][o];
          if (owner[i] == mi) {
            delta += std::min(to_o, d2[i]) - d1[i];
          } else if (to_o < d1[i]) {
            delta += to_o - d1[i];
          }
        }
        if (delta < best_delta) {
          best_delta = delta;
          best_m = mi;
          best_o = o;
        }
      }
    }
    if (best_m < 0) break;
    is_medoid[medoids[best_m]] = false;
    medoids[best_m] = best_o;
    is_medoid[best_o] = true;
    current += best_delta;
  }
  (void)current;
  return medoids;
}

// ---------------------------------------------------------------------------
// Store
// ---------------------------------------------------------------------------

const PatternGraph* PatternStore::find(std::uint64_t id) const {
  for (const auto& g : graphs_) {
    if (g.id == id) return &g;
  }
  return nullptr;
}

std::uint64_t PatternStore::ingest(PatternGraph completed, Seconds now) {
  if (auto err = validate_pattern(completed)) throw *err;
  const size_t bytes = encode_compact(completed).size();
  if (bytes >= kMaxPatternBytes) {
    throw Error(Errc::kOversizedPattern,
                "pattern encodes to " + std::to_string(bytes) + " bytes");
  }
  for (auto& g : graphs_) {
    if (graph_similarity(g, completed) == 1.0) {
      g.reuse_score += 1.0;
      g.last_touch = now;
      return g.id;
    }
  }
  completed.id = next_id_++;
  completed.reuse_score = 1.0;
  completed.last_touch = now;
  graphs_.push_back(std::move(completed));
  const auto id = graphs_.back().id;
  enforce_capacity();
  return id;
}

void PatternStore::enforce_capacity() {
  while (graphs_.size() > config_.capacity) {
    auto victim = std::min_element(graphs_.begin(), graphs_.end(), [](const auto& a, const auto& b) {
      return std::tie(a.reuse_score, a.id) < std::tie(b.reuse_score, b.id);
    });
    std::erase(medoids_, victim->id);
    graphs_.erase(victim);
  }
}

Expected<MatchResult> PatternStore::match(const PatternGraph& partial) const {
  const int stages = partial.graph.stage_count();
  if (stages < 1) return Error(Errc::kInvalidArgument, "partial graph reveals no stage");
  MatchResult best;
  best.matched_prefix_stages = stages;
  double best_sim = -1.0;
  for (const auto& g : graphs_) {
    auto sim = prefix_similarity(partial, g, stages);
    if (!sim) continue;
    const bool better =
        *sim > best_sim ||
        (*sim == best_sim && (g.reuse_score > best.pattern->reuse_score ||
                              (g.reuse_score == best.pattern->reuse_score && g.id < best.pattern->id)));
    if (better) {
      best_sim = *sim;
      best.pattern = &g;
    }
  }
  if (!best.pattern) return Error(Errc::kNoMatch, "every stored pattern diverges from the prefix");
  best.similarity = std::clamp(best_sim, 0.0, 1.0);
  return best;
}

void PatternStore::touch(std::uint64_t id, Seconds now) {
  for (auto& g : graphs_) {
    if (g.id != id) continue;
    const double hours = std::max(0.0, now - g.last_touch) / 3600.0;
    g.reuse_score = g.reuse_score * std::pow(config_.decay_per_hour, hours) + 1.0;
    g.last_touch = now;
    return;
  }
}

std::vector<std::uint64_t> PatternStore::cluster(int k) {
  const int n = static_cast<int>(graphs_.size());
  if (k < 1 || n < k) throw Error(Errc::kTooFewGraphs, "store holds fewer graphs than k");
  std::vector<std::vector<double>> dist(n, std::vector<double>(n, 0.0));
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      dist[i][j] = dist[j][i] = 1.0 - graph_similarity(graphs_[i], graphs_[j]);
    }
  }
  medoids_.clear();
  for (int idx : pam(dist, k)) medoids_.push_back(graphs_[idx].id);
  std::sort(medoids_.begin(), medoids_.end());
  return medoids_;
}

int PatternStore::decay_evict(Seconds now) {
  int evicted = 0;
  for (auto& g : graphs_) {
    const double hours = std::max(0.0, now - g.last_touch) / 3600.0;
    g.reuse_score *= std::pow(config_.decay_per_hour, hours);
    g.last_touch = std::max(g.last_touch, now);
  }
  for (auto it = graphs_.begin(); it != graphs_.end();) {
    if (it->reuse_score < config_.eviction_threshold) {
      std::erase(medoids_, it->id);
      it = graphs_.erase(it);
      ++evicted;
    } else {
      ++it;
    }
  }
  return evicted;
}

std::string PatternStore::to_jsonl() const {
  std::string out;
  for (const auto& g : graphs_) {
    json j = stage_graph_to_json(g.graph);
    j["id"] = g.id;
    j["stage_times"] = g.stage_times;
    j["total_time"] = g.total_time;
    j["reuse_score"] = g.reuse_score;
    j["last_touch"] = g.last_touch;
    j["medoid"] = std::find(medoids_.begin(), medoids_.end(), g.id) != medoids_.end();
    out += j.dump();
    out += '\n';
  }
  return out;
}

PatternStore PatternStore::from_jsonl(const std::string& text, PatternStoreConfig config) {
  PatternStore store(config);
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      json j = json::parse(line);
      PatternGraph g;
      g.graph = stage_graph_from_json(j);
      g.id = j.at("id");
      g.stage_times = j.at("stage_times").get<std::vector<double>>();
      g.total_time = j.at("total_time");
      g.reuse_score = j.at("reuse_score");
      g.last_touch = j.at("last_touch");
      if (auto err = validate_pattern(g)) throw *err;
      if (j.value("medoid", false)) store.medoids_.push_back(g.id);
      store.next_id_ = std::max(store.next_id_, g.id + 1);
      store.graphs_.push_back(std::move(g));
    } catch (const json::exception& e) {
      throw Error(Errc::kSchemaMismatch, "pattern line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return store;
}

std::optional<double> estimate_next_share(const PatternStore& store, const PatternGraph& partial,
                                          ShareMode mode) {
  auto m = store.match(partial);
  if (!m) return std::nullopt;
  return share_for_mode(*m->pattern, partial.stage_count(), mode);
}

}  // namespace gmax
