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

#include "gmax/core.h"

namespace gmax {

// A served compound request reduced to structure plus measured attributes.
// Stage times are in seconds; `reuse_score` is valued as of `last_touch`.
struct PatternGraph {
  std::uint64_t id = 0;
  StageGraph graph;
  std::vector<Seconds> stage_times;
  Seconds total_time = 0.0;
  double reuse_score = 1.0;
  Seconds last_touch = 0.0;

  int stage_count() const { return static_cast<int>(stage_times.size()); }
};

// Builds a pattern with total_time = sum(stage_times).
PatternGraph make_pattern(StageGraph graph, std::vector<Seconds> stage_times);

// The first `stages` stages of `full` (nodes, edges and times among them).
PatternGraph prefix_of(const PatternGraph& full, int stages);

std::optional<Error> validate_pattern(const PatternGraph& pattern);

// Compact varint encoding used to bound per-pattern memory.
std::vector<std::uint8_t> encode_compact(const PatternGraph& pattern);
PatternGraph decode_compact(const std::vector<std::uint8_t>& bytes);

inline constexpr size_t kMaxPatternBytes = 200;

// Gaussian kernel with a relative bandwidth sigma = max(0.25 * max(|a|,|b|), floor).
double gaussian_similarity(double a, double b, double sigma_floor);

// Kind or identity mismatch gives 0. LLM nodes compare output lengths, tool
// nodes compare execution times.
double node_similarity(const StageNode& a, const StageNode& b);

// Edges compare the input length flowing into the child (child input for LLM
// children, parent output for tool children). Endpoint mismatch gives 0.
double edge_similarity(const StageNode& a_parent, const StageNode& a_child,
                       const StageNode& b_parent, const StageNode& b_child);

// Mean node/edge similarity over the first `stages` stages, or nullopt when
// the identity prefix diverges (different model/tool at a revealed stage).
std::optional<double> prefix_similarity(const PatternGraph& query, const PatternGraph& candidate,
                                        int stages);

// Similarity of two complete patterns; 0 unless the stage structures agree.
double graph_similarity(const PatternGraph& a, const PatternGraph& b);

// ---------------------------------------------------------------------------
// Stage shares and sub-deadlines
// ---------------------------------------------------------------------------

enum class ShareMode {
  kCumulativeShare,  // phi(s) = t_<=s / t_total
  kPerStageShare,    // t_s / t_total
  kRemainingShare,   // t_s / t_>=s
};

const char* share_mode_name(ShareMode mode);

// phi(s). Requires 0 <= s < stage_count; the last stage returns exactly 1.
double stage_share(const PatternGraph& pattern, int s);

// The share used by `mode` at stage s. Past the last stage the cumulative
// share is 1 and the per-stage shares are 0.
double share_for_mode(const PatternGraph& pattern, int s, ShareMode mode);

// CumulativeShare: absolute sub-deadline phi(s) * D measured from the compound
// start. The other modes return a budget for stage s alone: PerStageShare
// against the full deadline, RemainingShare against the remaining budget D.
Seconds sub_deadline(const PatternGraph& pattern, int s, Seconds deadline, ShareMode mode);

// ---------------------------------------------------------------------------
// Store
// ---------------------------------------------------------------------------

struct PatternStoreConfig {
  double decay_per_hour = 0.9;
  double eviction_threshold = 0.05;
  size_t capacity = 2000;
};

struct MatchResult {
  const PatternGraph* pattern = nullptr;
  double similarity = 0.0;
  int matched_prefix_stages = 0;
};

class PatternStore {
 public:
  explicit PatternStore(PatternStoreConfig config = {}) : config_(config) {}

  const PatternStoreConfig& config() const { return config_; }
  const std::vector<PatternGraph>& graphs() const { return graphs_; }
  const std::vector<std::uint64_t>& medoids() const { return medoids_; }
  size_t size() const { return graphs_.size(); }
  const PatternGraph* find(std::uint64_t id) const;

  // Adds a completed pattern (reuse_score 1, touched at `now`), or bumps the
  // reuse score of an identical stored graph. Throws kOversizedPattern when
  // the compact encoding is >= kMaxPatternBytes. Returns the stored id.
  std::uint64_t ingest(PatternGraph completed, Seconds now);

  // Best candidate sharing the revealed identity prefix of `partial`
  // (all of its stages). Ties: higher reuse_score, then lower id.
  Expected<MatchResult> match(const PatternGraph& partial) const;

  void touch(std::uint64_t id, Seconds now);

  // PAM k-medoids over 1 - graph_similarity; medoid ids ascending. Throws
  // kTooFewGraphs.
  std::vector<std::uint64_t> cluster(int k);

  // Decays every score by decay_per_hour^(hours since last_touch) and evicts
  // graphs below the threshold. Returns the number evicted.
  int decay_evict(Seconds now);

  std::string to_jsonl() const;
  static PatternStore from_jsonl(const std::string& text, PatternStoreConfig config = {});

 private:
  void enforce_capacity();

  PatternStoreConfig config_;
  std::vector<PatternGraph> graphs_;
  std::vector<std::uint64_t> medoids_;
  std::uint64_t next_id_ = 1;
};

// Total within-cluster distance for a medoid set over a distance matrix.
double medoid_cost(const std::vector<std::vector<double>>& dist, const std::vector<int>& medoids);

// BUILD + SWAP PAM on an explicit distance matrix; deterministic.
std::vector<int> pam(const std::vector<std::vector<double>>& dist, int k);

// Estimated share for the stage right after the revealed prefix, using the
// best match in `store`. nullopt when nothing matches.
std::optional<double> estimate_next_share(const PatternStore& store, const PatternGraph& partial,
                                          ShareMode mode);

}  // namespace gmax
