// Copyright 2026 The Longturn Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "longturn/common.hpp"
#include "longturn/corpus.hpp"
#include "longturn/dense_index.hpp"
#include "longturn/encoder.hpp"
#include "longturn/metrics.hpp"

namespace longturn {

// 0 when any utterance of `candidate` equals an utterance of `context`, or
// when the two token streams share a run of more than `max_lcs` tokens;
// 1 otherwise.
int DialogueWeight(const Session& candidate, const Session& context,
                   std::size_t max_lcs);

// Per-session sampled counts shared across one rescale run.
class SamplerState {
 public:
  explicit SamplerState(std::uint64_t seed = 0) : seed_(seed) {}

  std::uint64_t count(const std::string& id) const;
  void Increment(const std::string& id);
  std::uint64_t total() const;
  std::uint64_t seed() const { return seed_; }

  // Snapshot of all non-zero counts.
  std::unordered_map<std::string, std::uint64_t> counts() const;

 private:
  std::uint64_t seed_;
  mutable std::mutex mu_;
  std::unordered_map<std::string, std::uint64_t> counts_;
  std::uint64_t total_ = 0;
};

// 1 / (r + 1) with r the number of times `id` has been sampled.
double CorpusWeight(const SamplerState& state, const std::string& id);

// Index i with probability weights[i] / sum(weights); nullopt when the sum is
// zero. Throws Error on a negative or non-finite weight or a size mismatch.
std::optional<std::size_t> SampleCandidate(std::span<const ScoredId> candidates,
                                           std::span<const double> weights,
                                           Rng& rng);

struct RescaleConfig {
  int updates = 5;          // L
  std::size_t top_k = 5;    // K
  std::size_t max_lcs = 10; // N
  bool enable_dialogue_weight = true;
  bool enable_corpus_weight = true;
  // Retry once with 2K candidates when every weight is zero.
  bool widen_on_exhaustion = false;
  std::uint64_t seed = 0;
  std::size_t workers = 1;

  void Validate() const;
};

nlohmann::json ToJson(const RescaleConfig& config);

enum class StopReason { kNone, kNoCandidates, kAllFiltered };

std::string_view ToString(StopReason reason);

struct RescaleStep {
  std::string query_id;
  std::vector<ScoredId> retrieved;
  std::vector<double> weights;
  std::optional<std::string> chosen_id;
  StopReason stop = StopReason::kNone;
};

struct RescaleTrace {
  std::string seed_id;
  std::vector<RescaleStep> steps;  // at most L
};

nlohmann::json ToJson(const RescaleTrace& trace);

// Repeatedly retrieve, weight, sample and append, starting from one seed
// session. Retrieval uses the most recently appended segment as the query;
// the dialogue-level filter compares against the full session built so far.
class Reorganizer {
 public:
  // `pool` is the corpus the index rows were built from.
  Reorganizer(const Corpus& pool, const DenseIndex& index,
              const SessionEncoder& query_encoder, RescaleConfig config);

  // Output id is "<seed id>::<number of appended segments>".
  std::pair<Session, RescaleTrace> RescaleSession(const Session& seed,
                                                  SamplerState& state) const;

  const RescaleConfig& config() const { return config_; }

 private:
  const Corpus& pool_;
  const DenseIndex& index_;
  const SessionEncoder& query_encoder_;
  RescaleConfig config_;
};

struct RescaleReport {
  std::string mode;  // "sequential" or "parallel"
  std::size_t sessions = 0;
  double avg_turns_before = 0.0;
  double avg_turns_after = 0.0;
  std::uint64_t total_selections = 0;
  std::map<int, std::size_t> early_stops_by_step;
  std::map<std::string, std::size_t> early_stops_by_reason;
  double overlap_score = 0.0;
  RepeatSampling repeat_sampling;
  std::size_t repeat_sampling_top_k = 1000;
  RescaleConfig config;
};

nlohmann::json ToJson(const RescaleReport& report);

struct RescaleResult {
  Corpus corpus;
  RescaleReport report;
  std::vector<RescaleTrace> traces;  // one per seed, in corpus order
  std::unordered_map<std::string, std::uint64_t> counts;
};

// One output session per input session, in input order, with one sampler
// state shared by the whole run. With config.workers > 1 seeds are processed
// concurrently; outputs stay in input order but sampled choices depend on how
// counter updates interleave.
RescaleResult RescaleCorpus(const Corpus& corpus, const DenseIndex& index,
                            const SessionEncoder& query_encoder,
                            const RescaleConfig& config);

// Post-hoc audit of a rescaled corpus against its source pool: replays every
// output's provenance and reports each appended segment that repeats an
// utterance of, or shares a run of more than `max_lcs` tokens with, the
// context it was appended to.
struct DedupViolation {
  std::string output_id;
  std::string segment_id;
  std::size_t step = 0;
  bool exact_utterance = false;
  std::size_t lcs = 0;
};

std::vector<DedupViolation> AuditDedup(const Corpus& output, const Corpus& pool,
                                       std::size_t max_lcs);

}  // namespace longturn
