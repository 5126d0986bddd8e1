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

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "longturn/common.hpp"
#include "longturn/corpus.hpp"
#include "longturn/text.hpp"

// Okapi BM25 over an in-memory inverted index.
//
//   score(q, d) = sum over query tokens t of
//                 idf(t) * tf * (k1 + 1) / (tf + k1 * (1 - b + b * |d| / avgdl))
//   idf(t)      = ln(1 + (N - df + 0.5) / (df + 0.5))
//
// Repeated query tokens contribute once per occurrence.
namespace longturn::bm25 {

struct Params {
  double k1 = 1.2;
  double b = 0.75;

  bool operator==(const Params&) const = default;
};

struct Posting {
  std::uint32_t doc = 0;
  std::uint32_t tf = 0;

  bool operator==(const Posting&) const = default;
};

class InvertedIndex {
 public:
  InvertedIndex() = default;

  // Throws Error when `docs` is empty or sizes disagree.
  static InvertedIndex Build(std::vector<std::string> doc_ids,
                             const std::vector<Tokens>& docs,
                             Params params = {});

  std::size_t num_docs() const { return doc_ids_.size(); }
  double avgdl() const { return avgdl_; }
  const Params& params() const { return params_; }
  std::uint32_t doc_len(std::size_t doc) const { return doc_len_.at(doc); }
  const std::string& doc_id(std::size_t doc) const { return doc_ids_.at(doc); }
  std::size_t num_terms() const { return postings_.size(); }

  // Postings for `term` sorted by document position, or empty.
  std::span<const Posting> postings(const std::string& term) const;
  std::size_t df(const std::string& term) const {
    return postings(term).size();
  }
  std::uint32_t tf(const std::string& term, std::size_t doc) const;
  double idf(const std::string& term) const;

  void Save(std::ostream& out) const;
  static InvertedIndex Load(std::istream& in);
  void Save(const std::filesystem::path& path) const;
  static InvertedIndex Load(const std::filesystem::path& path);

  bool operator==(const InvertedIndex&) const = default;

 private:
  std::vector<std::string> doc_ids_;
  std::vector<std::uint32_t> doc_len_;
  double avgdl_ = 0.0;
  Params params_;
  std::unordered_map<std::string, std::vector<Posting>> postings_;
};

using TextOf = std::function<std::string(const Session&)>;

// Index over text_of(s) for every session, in corpus order. Defaults to the
// session's utterances joined by a space.
InvertedIndex BuildIndex(const Corpus& corpus, const TextOf& text_of = SessionText,
                         Params params = {});

// Score of an indexed document.
double Score(const InvertedIndex& index, std::span<const std::string> query,
             std::size_t doc);

// Score of an arbitrary token sequence using the index's corpus statistics
// (N, df, avgdl). Used to compare query/candidate pairs outside the index.
double ScoreText(const InvertedIndex& index, std::span<const std::string> query,
                 std::span<const std::string> doc);

// Top-k documents with a positive score, by descending score then ascending
// document position. Documents whose id is in `exclude` are skipped.
std::vector<ScoredId> TopK(const InvertedIndex& index,
                           std::span<const std::string> query, std::size_t k,
                           const IdSet& exclude = {});
std::vector<ScoredId> TopK(const InvertedIndex& index, std::string_view query,
                           std::size_t k, const IdSet& exclude = {});

}  // namespace longturn::bm25
