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
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "longturn/bm25.hpp"
#include "longturn/common.hpp"
#include "longturn/corpus.hpp"

namespace longturn {

// A session cut into two consecutive segments at `split` (the number of
// utterances kept in the query segment).
struct SplitSegments {
  Session query;
  Session candidate;
  std::size_t split = 0;
};

// Draws the split uniformly from [2, K - 2]. Throws Error when K < 4.
SplitSegments SplitSession(const Session& s, Rng& rng);

// The split used for `s` under a global seed. Every component that needs the
// training-time split of a session derives it through this function.
SplitSegments SplitFor(const Session& s, std::uint64_t seed);

inline constexpr std::size_t kMinTrainingTurns = 4;

enum class NegativeKind { kEasy, kHard };

std::string_view ToString(NegativeKind kind);

struct Negative {
  Session segment;
  std::string source_id;
  std::size_t split = 0;
  NegativeKind kind = NegativeKind::kEasy;
};

struct TrainingInstance {
  std::string source_id;
  std::size_t split = 0;
  Session query;
  Session positive;
  std::vector<Negative> negatives;
};

struct PairConfig {
  std::size_t n_easy = 7;
  std::size_t n_hard = 8;
  std::uint64_t seed = 0;
};

struct TrainingSet {
  std::vector<TrainingInstance> instances;
  std::size_t excluded_short = 0;  // sessions with fewer than 4 turns
};

// BM25 index over the candidate segment of every session with at least four
// turns, split with SplitFor(seed). Document ids are the source session ids.
// Throws Error when no session is long enough.
bm25::InvertedIndex BuildSegmentIndex(const Corpus& corpus, std::uint64_t seed);

// One instance per session with at least four turns. Easy negatives are the
// candidate segments of other sessions drawn without replacement; hard
// negatives are the BM25 top-n_hard candidate segments for the query segment
// with the instance's own source excluded. `segment_index` must come from
// BuildSegmentIndex(corpus, config.seed).
//
// Returns an empty set when no session is eligible. Throws Error when there
// are eligible sessions but fewer than n_easy + 1 of them.
TrainingSet MakeTrainingSet(const Corpus& corpus,
                            const bm25::InvertedIndex& segment_index,
                            const PairConfig& config);

nlohmann::json TrainingInstanceToJson(const TrainingInstance& instance);
TrainingInstance TrainingInstanceFromJson(const nlohmann::json& record);
void WriteTrainingSet(const std::vector<TrainingInstance>& instances,
                      std::ostream& out);
std::vector<TrainingInstance> ReadTrainingSet(std::istream& in);

enum class Aspect { kIrrelevance, kLocalRelevance, kDiscourseIncoherence };

inline constexpr Aspect kAllAspects[] = {Aspect::kIrrelevance,
                                         Aspect::kLocalRelevance,
                                         Aspect::kDiscourseIncoherence};

std::string_view ToString(Aspect aspect);
Aspect AspectFromString(std::string_view name);

// For a K-turn source (1-based utterances u1..uK):
//   query    = u4 .. u(K-3)
//   positive = u(K-2), u(K-1), uK
//   negative = per aspect:
//     irrelevance            three consecutive utterances of another session
//     local relevance        one positive utterance kept in place, the other
//                            two replaced by consecutive utterances of another
//                            session
//     discourse incoherence  u1, u2, u3
struct PerturbationPair {
  std::string source_id;
  Aspect aspect = Aspect::kIrrelevance;
  Session query;
  Session positive;
  Session negative;
  std::string negative_source_id;
  std::optional<std::size_t> kept_position;  // local relevance only
};

inline constexpr std::size_t kMinPerturbationTurns = 7;

struct PerturbationSet {
  std::vector<PerturbationPair> pairs;
  std::size_t skipped_short = 0;
  std::size_t skipped_no_donor = 0;
};

PerturbationSet MakePerturbationSet(const Corpus& corpus, Aspect aspect,
                                    std::uint64_t seed);

nlohmann::json PerturbationPairToJson(const PerturbationPair& pair);
void WritePerturbationSet(const std::vector<PerturbationPair>& pairs,
                          std::ostream& out);

}  // namespace longturn
