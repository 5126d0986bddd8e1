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

#include "longturn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <set>

namespace longturn {

OverlapResult OverlapScore(const Corpus& corpus) {
  OverlapResult out;
  Tokens context;
  for (const auto& s : corpus) {
    context.clear();
    for (std::size_t i = 0; i < s.utterances.size(); ++i) {
      const Tokens& utt = s.utterances[i].tokens();
      if (i > 0) {
        ++out.scored_utterances;
        out.lcs_tokens += LcsLength(utt, context);
        out.utterance_tokens += utt.size();
      }
      context.insert(context.end(), utt.begin(), utt.end());
    }
  }
  out.no_scored_utterances = out.scored_utterances == 0;
  if (out.utterance_tokens > 0) {
    out.value = static_cast<double>(out.lcs_tokens) /
                static_cast<double>(out.utterance_tokens);
  }
  return out;
}

RepeatSampling ComputeRepeatSampling(
    const std::unordered_map<std::string, std::uint64_t>& counts,
    std::size_t top_k) {
  if (top_k == 0) throw Error("repeat sampling requires top_k >= 1");
  RepeatSampling out;
  if (counts.empty()) return out;
  std::vector<std::uint64_t> values;
  values.reserve(counts.size());
  for (const auto& [id, c] : counts) values.push_back(c);
  std::sort(values.begin(), values.end(), std::greater<>());
  values.resize(std::min(top_k, values.size()));
  double sum = 0.0;
  for (auto v : values) sum += static_cast<double>(v);
  out.population = values.size();
  out.mean = sum / static_cast<double>(values.size());
  double sq = 0.0;
  for (auto v : values) {
    const double d = static_cast<double>(v) - out.mean;
    sq += d * d;
  }
  out.std = std::sqrt(sq / static_cast<double>(values.size()));
  out.empty = false;
  return out;
}

double DistinctN(std::span<const std::string> texts, std::size_t n) {
  if (n == 0) throw Error("distinct-n requires n >= 1");
  std::set<std::vector<std::string>> unique;
  std::size_t total = 0;
  for (const auto& text : texts) {
    const Tokens t = Tokenize(text);
    if (t.size() < n) continue;
    for (std::size_t i = 0; i + n <= t.size(); ++i) {
      unique.emplace(t.begin() + static_cast<std::ptrdiff_t>(i),
                     t.begin() + static_cast<std::ptrdiff_t>(i + n));
      ++total;
    }
  }
  return total == 0 ? 0.0
                    : static_cast<double>(unique.size()) / static_cast<double>(total);
}

std::vector<std::vector<double>> Retriever::ScoreAll(
    std::span<const Session> queries, std::span<const Session> candidates) const {
  std::vector<std::vector<double>> out;
  out.reserve(queries.size());
  for (const auto& q : queries) out.push_back(Score(q, candidates));
  return out;
}

DenseRetriever::DenseRetriever(std::shared_ptr<const SessionEncoder> query_encoder,
                               std::shared_ptr<const SessionEncoder> candidate_encoder,
                               std::string name)
    : query_encoder_(std::move(query_encoder)),
      candidate_encoder_(std::move(candidate_encoder)),
      name_(std::move(name)) {
  if (query_encoder_->dim() != candidate_encoder_->dim()) {
    throw Error("dense retriever: query and candidate dimensions differ");
  }
}

std::vector<double> DenseRetriever::Score(const Session& query,
                                          std::span<const Session> candidates) const {
  return ScoreAll(std::span(&query, 1), candidates).front();
}

std::vector<std::vector<double>> DenseRetriever::ScoreAll(
    std::span<const Session> queries, std::span<const Session> candidates) const {
  std::vector<Vector<float>> c;
  c.reserve(candidates.size());
  for (const auto& s : candidates) c.push_back(candidate_encoder_->Encode(s));
  std::vector<std::vector<double>> out;
  out.reserve(queries.size());
  for (const auto& s : queries) {
    const Vector<float> q = query_encoder_->Encode(s);
    std::vector<double> row;
    row.reserve(c.size());
    for (const auto& v : c) row.push_back(Similarity(q, v));
    out.push_back(std::move(row));
  }
  return out;
}

Bm25Retriever Bm25Retriever::FromSessions(std::span<const Session> sessions) {
  std::vector<std::string> ids;
  std::vector<Tokens> docs;
  for (std::size_t i = 0; i < sessions.size(); ++i) {
    ids.push_back(std::to_string(i));
    docs.push_back(SessionTokens(sessions[i]));
  }
  return Bm25Retriever(bm25::InvertedIndex::Build(std::move(ids), docs));
}

std::vector<double> Bm25Retriever::Score(const Session& query,
                                         std::span<const Session> candidates) const {
  const Tokens q = SessionTokens(query);
  std::vector<double> out;
  out.reserve(candidates.size());
  for (const auto& c : candidates) {
    out.push_back(bm25::ScoreText(stats_, q, SessionTokens(c)));
  }
  return out;
}

RecallEvaluation BuildRecallEvaluation(const Corpus& corpus, std::uint64_t seed) {
  RecallEvaluation eval;
  for (const auto& s : corpus) {
    if (s.turns() < kMinTrainingTurns) continue;
    auto split = SplitFor(s, seed);
    split.candidate.id = s.id;
    eval.queries.push_back({std::move(split.query), s.id, {}});
    eval.pool.push_back(std::move(split.candidate));
  }
  return eval;
}

RecallResult RecallAtK(const Retriever& retriever, std::span<const EvalQuery> queries,
                       std::span<const Session> pool, std::span<const std::size_t> ks) {
  std::unordered_map<std::string, std::size_t> position;
  for (std::size_t i = 0; i < pool.size(); ++i) position.emplace(pool[i].id, i);
  std::vector<Session> query_sessions;
  std::vector<std::size_t> positive;
  for (const auto& q : queries) {
    auto it = position.find(q.positive_id);
    if (it == position.end()) {
      throw Error("positive '" + q.positive_id + "' is not in the candidate pool");
    }
    positive.push_back(it->second);
    query_sessions.push_back(q.query);
  }
  RecallResult out;
  out.queries = queries.size();
  for (std::size_t k : ks) out.recall[k] = 0.0;
  if (queries.empty()) return out;

  const auto scores = retriever.ScoreAll(query_sessions, pool);
  std::vector<std::size_t> ranks(queries.size());
  for (std::size_t i = 0; i < queries.size(); ++i) {
    const std::size_t p = positive[i];
    const double own = scores[i][p];
    std::size_t rank = 1;
    for (std::size_t j = 0; j < pool.size(); ++j) {
      if (j == p || queries[i].excluded_ids.count(pool[j].id)) continue;
      if (scores[i][j] > own || (scores[i][j] == own && j < p)) ++rank;
    }
    ranks[i] = rank;
  }
  for (std::size_t k : ks) {
    const auto hits = std::count_if(ranks.begin(), ranks.end(),
                                    [k](std::size_t r) { return r <= k; });
    out.recall[k] = static_cast<double>(hits) / static_cast<double>(queries.size());
  }
  return out;
}

double DiscriminationAccuracy(const Retriever& retriever,
                              std::span<const PerturbationPair> pairs) {
  if (pairs.empty()) throw Error("discrimination accuracy needs at least one pair");
  double credit = 0.0;
  for (const auto& pair : pairs) {
    const Session candidates[] = {pair.positive, pair.negative};
    const auto s = retriever.Score(pair.query, candidates);
    if (s[0] > s[1]) {
      credit += 1.0;
    } else if (s[0] == s[1]) {
      credit += 0.5;
    }
  }
  return credit / static_cast<double>(pairs.size());
}

}  // namespace longturn
