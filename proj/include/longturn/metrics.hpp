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
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "longturn/bm25.hpp"
#include "longturn/common.hpp"
#include "longturn/corpus.hpp"
#include "longturn/encoder.hpp"
#include "longturn/pairgen.hpp"

namespace longturn {

// Micro-averaged in-context overlap: for every utterance after the first of
// its session, the longest common token run between the utterance and all
// preceding utterances of the session, summed and divided by the summed
// utterance token counts.
struct OverlapResult {
  double value = 0.0;
  std::size_t scored_utterances = 0;
  std::uint64_t lcs_tokens = 0;
  std::uint64_t utterance_tokens = 0;
  // True when no utterance had any context; value is 0 by convention.
  bool no_scored_utterances = true;
};

OverlapResult OverlapScore(const Corpus& corpus);

// Mean and population standard deviation of the top_k largest counts.
struct RepeatSampling {
  double mean = 0.0;
  double std = 0.0;
  std::size_t population = 0;
  bool empty = true;
};

RepeatSampling ComputeRepeatSampling(
    const std::unordered_map<std::string, std::uint64_t>& counts,
    std::size_t top_k = 1000);

// Unique token n-grams over all n-grams of the pooled texts; 0 when there are
// none. Texts shorter than n contribute nothing.
double DistinctN(std::span<const std::string> texts, std::size_t n);

// Scores candidate sessions for a query; higher is more coherent.
class Retriever {
 public:
  virtual ~Retriever() = default;
  virtual std::string name() const = 0;
  virtual std::vector<double> Score(const Session& query,
                                    std::span<const Session> candidates) const = 0;
  // scores[i][j] for queries[i] against candidates[j].
  virtual std::vector<std::vector<double>> ScoreAll(
      std::span<const Session> queries, std::span<const Session> candidates) const;
};

class DenseRetriever final : public Retriever {
 public:
  DenseRetriever(std::shared_ptr<const SessionEncoder> query_encoder,
                 std::shared_ptr<const SessionEncoder> candidate_encoder,
                 std::string name = "dense");

  std::string name() const override { return name_; }
  std::vector<double> Score(const Session& query,
                            std::span<const Session> candidates) const override;
  std::vector<std::vector<double>> ScoreAll(
      std::span<const Session> queries,
      std::span<const Session> candidates) const override;

 private:
  std::shared_ptr<const SessionEncoder> query_encoder_;
  std::shared_ptr<const SessionEncoder> candidate_encoder_;
  std::string name_;
};

// BM25 with term statistics taken from a reference collection.
class Bm25Retriever final : public Retriever {
 public:
  explicit Bm25Retriever(bm25::InvertedIndex statistics)
      : stats_(std::move(statistics)) {}
  // Statistics over the given sessions.
  static Bm25Retriever FromSessions(std::span<const Session> sessions);

  std::string name() const override { return "bm25"; }
  std::vector<double> Score(const Session& query,
                            std::span<const Session> candidates) const override;

 private:
  bm25::InvertedIndex stats_;
};

struct EvalQuery {
  Session query;
  std::string positive_id;
  // Pool ids that may not be retrieved for this query (same source as the
  // query, other than the positive).
  IdSet excluded_ids;
};

// Queries are the query segments and the pool the candidate segments of every
// session with at least four turns, split with SplitFor(seed). Pool sessions
// carry their source session id.
struct RecallEvaluation {
  std::vector<EvalQuery> queries;
  std::vector<Session> pool;
};

RecallEvaluation BuildRecallEvaluation(const Corpus& corpus, std::uint64_t seed);

struct RecallResult {
  std::map<std::size_t, double> recall;  // k -> recall@k
  std::size_t queries = 0;
};

// Rank of the positive among the non-excluded pool, ties by pool position.
// Throws Error when a positive id is not in the pool.
RecallResult RecallAtK(const Retriever& retriever, std::span<const EvalQuery> queries,
                       std::span<const Session> pool, std::span<const std::size_t> ks);

// Fraction of pairs where sim(query, positive) > sim(query, negative), with
// exact ties counted as one half. Throws Error on an empty pair list.
double DiscriminationAccuracy(const Retriever& retriever,
                              std::span<const PerturbationPair> pairs);

}  // namespace longturn
