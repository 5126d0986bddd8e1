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

#include "longturn/pairgen.hpp"

#include <algorithm>
#include <istream>
#include <ostream>
#include <unordered_set>

namespace longturn {
namespace {

Session Slice(const Session& s, std::size_t begin, std::size_t end,
              std::string id) {
  Session out;
  out.id = std::move(id);
  out.utterances.assign(s.utterances.begin() + static_cast<std::ptrdiff_t>(begin),
                        s.utterances.begin() + static_cast<std::ptrdiff_t>(end));
  return out;
}

nlohmann::json Utterances(const Session& s) {
  auto arr = nlohmann::json::array();
  for (const auto& u : s.utterances) arr.push_back(u.text());
  return arr;
}

Session SegmentFromJson(std::string id, const nlohmann::json& utterances) {
  return MakeSession(std::move(id), utterances.get<std::vector<std::string>>());
}

std::vector<std::size_t> EligiblePositions(const Corpus& corpus,
                                           std::size_t min_turns) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    if (corpus[i].turns() >= min_turns) out.push_back(i);
  }
  return out;
}

// A uniformly drawn element of `donors` other than `self`, or nullopt when
// there is none.
std::optional<std::size_t> DrawDonor(const std::vector<std::size_t>& donors,
                                     std::size_t self, Rng& rng) {
  const bool self_is_donor =
      std::binary_search(donors.begin(), donors.end(), self);
  const std::size_t available = donors.size() - (self_is_donor ? 1 : 0);
  if (available == 0) return std::nullopt;
  std::size_t pick = rng.UniformIndex(available);
  if (self_is_donor) {
    const auto self_rank = static_cast<std::size_t>(
        std::lower_bound(donors.begin(), donors.end(), self) - donors.begin());
    if (pick >= self_rank) ++pick;
  }
  return donors[pick];
}

}  // namespace

SplitSegments SplitSession(const Session& s, Rng& rng) {
  const std::size_t k = s.turns();
  if (k < kMinTrainingTurns) {
    throw Error("cannot split session '" + s.id + "' with " +
                std::to_string(k) + " turns (need at least 4)");
  }
  const auto m = static_cast<std::size_t>(
      rng.UniformInt(2, static_cast<std::int64_t>(k) - 2));
  SplitSegments out;
  out.split = m;
  out.query = Slice(s, 0, m, s.id + "#q");
  out.candidate = Slice(s, m, k, s.id + "#c");
  return out;
}

SplitSegments SplitFor(const Session& s, std::uint64_t seed) {
  Rng rng(DeriveSeed(seed, "split:" + s.id));
  return SplitSession(s, rng);
}

std::string_view ToString(NegativeKind kind) {
  return kind == NegativeKind::kEasy ? "easy" : "hard";
}

bm25::InvertedIndex BuildSegmentIndex(const Corpus& corpus, std::uint64_t seed) {
  std::vector<std::string> ids;
  std::vector<Tokens> docs;
  for (const auto& s : corpus) {
    if (s.turns() < kMinTrainingTurns) continue;
    ids.push_back(s.id);
    docs.push_back(SessionTokens(SplitFor(s, seed).candidate));
  }
  return bm25::InvertedIndex::Build(std::move(ids), docs);
}

TrainingSet MakeTrainingSet(const Corpus& corpus,
                            const bm25::InvertedIndex& segment_index,
                            const PairConfig& config) {
  TrainingSet set;
  const auto eligible = EligiblePositions(corpus, kMinTrainingTurns);
  set.excluded_short = corpus.size() - eligible.size();
  if (eligible.empty()) return set;
  if (eligible.size() < config.n_easy + 1) {
    throw Error("need at least " + std::to_string(config.n_easy + 1) +
                " sessions with 4+ turns for " + std::to_string(config.n_easy) +
                " easy negatives, found " + std::to_string(eligible.size()));
  }
  if (segment_index.num_docs() != eligible.size()) {
    throw Error("segment index does not match the corpus");
  }

  std::vector<SplitSegments> splits;
  splits.reserve(eligible.size());
  for (std::size_t e = 0; e < eligible.size(); ++e) {
    const Session& s = corpus[eligible[e]];
    if (segment_index.doc_id(e) != s.id) {
      throw Error("segment index does not match the corpus");
    }
    splits.push_back(SplitFor(s, config.seed));
  }

  set.instances.reserve(eligible.size());
  for (std::size_t e = 0; e < eligible.size(); ++e) {
    const Session& source = corpus[eligible[e]];
    TrainingInstance inst;
    inst.source_id = source.id;
    inst.split = splits[e].split;
    inst.query = splits[e].query;
    inst.positive = splits[e].candidate;

    Rng rng(DeriveSeed(config.seed, "easy:" + source.id));
    std::unordered_set<std::size_t> chosen;
    while (chosen.size() < config.n_easy) {
      const auto j = static_cast<std::size_t>(rng.UniformIndex(eligible.size()));
      if (j == e || !chosen.insert(j).second) continue;
      inst.negatives.push_back({splits[j].candidate, corpus[eligible[j]].id,
                                splits[j].split, NegativeKind::kEasy});
    }

    if (config.n_hard > 0) {
      const Tokens query_tokens = SessionTokens(inst.query);
      for (const auto& hit : bm25::TopK(segment_index, query_tokens,
                                        config.n_hard, {source.id})) {
        inst.negatives.push_back({splits[hit.position].candidate, hit.id,
                                  splits[hit.position].split,
                                  NegativeKind::kHard});
      }
    }
    set.instances.push_back(std::move(inst));
  }
  return set;
}

nlohmann::json TrainingInstanceToJson(const TrainingInstance& instance) {
  nlohmann::json j;
  j["source_id"] = instance.source_id;
  j["split"] = instance.split;
  j["query"] = Utterances(instance.query);
  j["positive"] = Utterances(instance.positive);
  auto& negs = j["negatives"] = nlohmann::json::array();
  for (const auto& n : instance.negatives) {
    negs.push_back({{"source_id", n.source_id},
                    {"split", n.split},
                    {"kind", ToString(n.kind)},
                    {"utterances", Utterances(n.segment)}});
  }
  return j;
}

TrainingInstance TrainingInstanceFromJson(const nlohmann::json& record) {
  TrainingInstance inst;
  inst.source_id = record.at("source_id").get<std::string>();
  inst.split = record.at("split").get<std::size_t>();
  inst.query = SegmentFromJson(inst.source_id + "#q", record.at("query"));
  inst.positive = SegmentFromJson(inst.source_id + "#c", record.at("positive"));
  for (const auto& n : record.at("negatives")) {
    Negative neg;
    neg.source_id = n.at("source_id").get<std::string>();
    neg.split = n.at("split").get<std::size_t>();
    const auto kind = n.at("kind").get<std::string>();
    if (kind == "easy") {
      neg.kind = NegativeKind::kEasy;
    } else if (kind == "hard") {
      neg.kind = NegativeKind::kHard;
    } else {
      throw Error("unknown negative kind '" + kind + "'");
    }
    neg.segment = SegmentFromJson(neg.source_id + "#c", n.at("utterances"));
    inst.negatives.push_back(std::move(neg));
  }
  return inst;
}

void WriteTrainingSet(const std::vector<TrainingInstance>& instances,
                      std::ostream& out) {
  for (const auto& inst : instances) {
    out << TrainingInstanceToJson(inst).dump() << '\n';
  }
}

std::vector<TrainingInstance> ReadTrainingSet(std::istream& in) {
  std::vector<TrainingInstance> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(TrainingInstanceFromJson(nlohmann::json::parse(line)));
    } catch (const std::exception& e) {
      throw Error("training set line " + std::to_string(line_no) + ": " +
                  e.what());
    }
  }
  return out;
}

std::string_view ToString(Aspect aspect) {
  switch (aspect) {
    case Aspect::kIrrelevance:
      return "irrelevance";
    case Aspect::kLocalRelevance:
      return "local_relevance";
    case Aspect::kDiscourseIncoherence:
      return "discourse_incoherence";
  }
  return "unknown";
}

Aspect AspectFromString(std::string_view name) {
  for (Aspect a : kAllAspects) {
    if (ToString(a) == name) return a;
  }
  throw Error("unknown perturbation aspect '" + std::string(name) + "'");
}

PerturbationSet MakePerturbationSet(const Corpus& corpus, Aspect aspect,
                                    std::uint64_t seed) {
  constexpr std::size_t kDonorAttempts = 32;
  PerturbationSet set;
  const auto window3 = EligiblePositions(corpus, 3);
  const auto window2 = EligiblePositions(corpus, 2);
  const std::string tag(ToString(aspect));

  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const Session& s = corpus[i];
    const std::size_t k = s.turns();
    if (k < kMinPerturbationTurns) {
      ++set.skipped_short;
      continue;
    }
    Rng rng(DeriveSeed(seed, "perturb:" + tag + ":" + s.id));
    PerturbationPair pair;
    pair.source_id = s.id;
    pair.aspect = aspect;
    pair.query = Slice(s, 3, k - 3, s.id + "#q");
    pair.positive = Slice(s, k - 3, k, s.id + "#p");

    bool ok = true;
    switch (aspect) {
      case Aspect::kDiscourseIncoherence:
        pair.negative = Slice(s, 0, 3, s.id + "#n");
        pair.negative_source_id = s.id;
        break;
      case Aspect::kIrrelevance: {
        const auto donor = DrawDonor(window3, i, rng);
        if (!donor) {
          ok = false;
          break;
        }
        const Session& d = corpus[*donor];
        const auto start = rng.UniformIndex(d.turns() - 2);
        pair.negative = Slice(d, start, start + 3, s.id + "#n");
        pair.negative_source_id = d.id;
        break;
      }
      case Aspect::kLocalRelevance: {
        const std::size_t kept = rng.UniformIndex(3);
        ok = false;
        for (std::size_t attempt = 0; attempt < kDonorAttempts && !ok;
             ++attempt) {
          const auto donor = DrawDonor(window2, i, rng);
          if (!donor) break;
          const Session& d = corpus[*donor];
          const auto start = rng.UniformIndex(d.turns() - 1);
          const Utterance& r0 = d.utterances[start];
          const Utterance& r1 = d.utterances[start + 1];
          const auto& pos = pair.positive.utterances;
          const auto in_positive = [&](const Utterance& u) {
            return std::find(pos.begin(), pos.end(), u) != pos.end();
          };
          if (in_positive(r0) || in_positive(r1)) continue;
          pair.negative.id = s.id + "#n";
          pair.negative.utterances.clear();
          std::size_t next = 0;
          for (std::size_t p = 0; p < 3; ++p) {
            if (p == kept) {
              pair.negative.utterances.push_back(pos[p]);
            } else {
              pair.negative.utterances.push_back(next++ == 0 ? r0 : r1);
            }
          }
          pair.negative_source_id = d.id;
          pair.kept_position = kept;
          ok = true;
        }
        break;
      }
    }
    if (!ok) {
      ++set.skipped_no_donor;
      continue;
    }
    set.pairs.push_back(std::move(pair));
  }
  return set;
}

nlohmann::json PerturbationPairToJson(const PerturbationPair& pair) {
  nlohmann::json j;
  j["source_id"] = pair.source_id;
  j["aspect"] = ToString(pair.aspect);
  j["query"] = Utterances(pair.query);
  j["positive"] = Utterances(pair.positive);
  j["negative"] = Utterances(pair.negative);
  j["negative_source_id"] = pair.negative_source_id;
  if (pair.kept_position) j["kept_position"] = *pair.kept_position;
  return j;
}

void WritePerturbationSet(const std::vector<PerturbationPair>& pairs,
                          std::ostream& out) {
  for (const auto& p : pairs) out << PerturbationPairToJson(p).dump() << '\n';
}

}  // namespace longturn
