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

#include "longturn/bm25.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include "longturn/binary_io.hpp"

namespace longturn::bm25 {
namespace {

constexpr char kMagic[9] = "LTBM25IX";
constexpr std::uint32_t kVersion = 1;

double TermWeight(const InvertedIndex& index, double idf, double tf,
                  double doc_len) {
  const auto& p = index.params();
  const double norm =
      index.avgdl() > 0.0 ? (1.0 - p.b + p.b * doc_len / index.avgdl()) : 1.0;
  return idf * tf * (p.k1 + 1.0) / (tf + p.k1 * norm);
}

bool Ranks(const ScoredId& a, const ScoredId& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.position < b.position;
}

}  // namespace

InvertedIndex InvertedIndex::Build(std::vector<std::string> doc_ids,
                                   const std::vector<Tokens>& docs,
                                   Params params) {
  if (docs.empty()) throw Error("cannot build a BM25 index over no documents");
  if (doc_ids.size() != docs.size()) {
    throw Error("BM25 build: id and document counts differ");
  }
  InvertedIndex index;
  index.doc_ids_ = std::move(doc_ids);
  index.params_ = params;
  index.doc_len_.reserve(docs.size());
  std::uint64_t total = 0;
  for (std::size_t d = 0; d < docs.size(); ++d) {
    std::map<std::string_view, std::uint32_t> counts;
    for (const auto& t : docs[d]) ++counts[t];
    for (const auto& [term, tf] : counts) {
      index.postings_[std::string(term)].push_back(
          {static_cast<std::uint32_t>(d), tf});
    }
    index.doc_len_.push_back(static_cast<std::uint32_t>(docs[d].size()));
    total += docs[d].size();
  }
  index.avgdl_ = static_cast<double>(total) / static_cast<double>(docs.size());
  return index;
}

std::span<const Posting> InvertedIndex::postings(const std::string& term) const {
  auto it = postings_.find(term);
  if (it == postings_.end()) return {};
  return it->second;
}

std::uint32_t InvertedIndex::tf(const std::string& term, std::size_t doc) const {
  const auto list = postings(term);
  auto it = std::lower_bound(
      list.begin(), list.end(), doc,
      [](const Posting& p, std::size_t d) { return p.doc < d; });
  return (it != list.end() && it->doc == doc) ? it->tf : 0;
}

double InvertedIndex::idf(const std::string& term) const {
  const double n = static_cast<double>(num_docs());
  const double df = static_cast<double>(this->df(term));
  return std::log(1.0 + (n - df + 0.5) / (df + 0.5));
}

void InvertedIndex::Save(std::ostream& out) const {
  io::WriteMagic(out, kMagic);
  io::WriteLE<std::uint32_t>(out, kVersion);
  io::WriteLE<std::uint64_t>(out, num_docs());
  io::WriteLE<double>(out, avgdl_);
  io::WriteLE<double>(out, params_.k1);
  io::WriteLE<double>(out, params_.b);
  for (std::size_t d = 0; d < num_docs(); ++d) {
    io::WriteString(out, doc_ids_[d]);
    io::WriteLE<std::uint32_t>(out, doc_len_[d]);
  }
  std::vector<const std::string*> terms;
  terms.reserve(postings_.size());
  for (const auto& [term, list] : postings_) terms.push_back(&term);
  std::sort(terms.begin(), terms.end(),
            [](const std::string* a, const std::string* b) { return *a < *b; });
  io::WriteLE<std::uint64_t>(out, terms.size());
  for (const std::string* term : terms) {
    const auto& list = postings_.at(*term);
    io::WriteString(out, *term);
    io::WriteLE<std::uint64_t>(out, list.size());
    for (const auto& p : list) {
      io::WriteLE<std::uint32_t>(out, p.doc);
      io::WriteLE<std::uint32_t>(out, p.tf);
    }
  }
}

InvertedIndex InvertedIndex::Load(std::istream& in) {
  io::ExpectMagic(in, kMagic, "BM25 index");
  const auto version = io::ReadLE<std::uint32_t>(in);
  if (version != kVersion) {
    throw Error("unsupported BM25 index version " + std::to_string(version));
  }
  InvertedIndex index;
  const auto n = io::ReadLE<std::uint64_t>(in);
  index.avgdl_ = io::ReadLE<double>(in);
  index.params_.k1 = io::ReadLE<double>(in);
  index.params_.b = io::ReadLE<double>(in);
  for (std::uint64_t d = 0; d < n; ++d) {
    index.doc_ids_.push_back(io::ReadString(in));
    index.doc_len_.push_back(io::ReadLE<std::uint32_t>(in));
  }
  const auto num_terms = io::ReadLE<std::uint64_t>(in);
  for (std::uint64_t t = 0; t < num_terms; ++t) {
    auto term = io::ReadString(in);
    const auto len = io::ReadLE<std::uint64_t>(in);
    std::vector<Posting> list;
    list.reserve(len);
    for (std::uint64_t i = 0; i < len; ++i) {
      Posting p;
      p.doc = io::ReadLE<std::uint32_t>(in);
      p.tf = io::ReadLE<std::uint32_t>(in);
      if (p.doc >= n) throw Error("BM25 index posting out of range");
      list.push_back(p);
    }
    index.postings_.emplace(std::move(term), std::move(list));
  }
  return index;
}

void InvertedIndex::Save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  Save(out);
}

InvertedIndex InvertedIndex::Load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  return Load(in);
}

InvertedIndex BuildIndex(const Corpus& corpus, const TextOf& text_of,
                         Params params) {
  std::vector<std::string> ids;
  std::vector<Tokens> docs;
  ids.reserve(corpus.size());
  docs.reserve(corpus.size());
  for (const auto& s : corpus) {
    ids.push_back(s.id);
    docs.push_back(Tokenize(text_of(s)));
  }
  return InvertedIndex::Build(std::move(ids), docs, params);
}

double Score(const InvertedIndex& index, std::span<const std::string> query,
             std::size_t doc) {
  const double doc_len = index.doc_len(doc);
  double score = 0.0;
  for (const auto& term : query) {
    const std::uint32_t tf = index.tf(term, doc);
    if (tf == 0) continue;
    score += TermWeight(index, index.idf(term), tf, doc_len);
  }
  return score;
}

double ScoreText(const InvertedIndex& index, std::span<const std::string> query,
                 std::span<const std::string> doc) {
  std::unordered_map<std::string_view, std::uint32_t> counts;
  for (const auto& t : doc) ++counts[t];
  double score = 0.0;
  for (const auto& term : query) {
    auto it = counts.find(term);
    if (it == counts.end()) continue;
    score += TermWeight(index, index.idf(term), it->second,
                        static_cast<double>(doc.size()));
  }
  return score;
}

std::vector<ScoredId> TopK(const InvertedIndex& index,
                           std::span<const std::string> query, std::size_t k,
                           const IdSet& exclude) {
  if (k == 0) throw Error("BM25 top-k requires k >= 1");
  std::vector<double> acc(index.num_docs(), 0.0);
  std::vector<std::uint32_t> touched;
  for (const auto& term : query) {
    const auto list = index.postings(term);
    if (list.empty()) continue;
    const double idf = index.idf(term);
    for (const auto& p : list) {
      if (acc[p.doc] == 0.0) touched.push_back(p.doc);
      acc[p.doc] += TermWeight(index, idf, p.tf, index.doc_len(p.doc));
    }
  }
  std::vector<ScoredId> hits;
  hits.reserve(touched.size());
  for (std::uint32_t d : touched) {
    const auto& id = index.doc_id(d);
    if (exclude.count(id)) continue;
    hits.push_back({id, acc[d], d});
  }
  const std::size_t keep = std::min(k, hits.size());
  std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(keep),
                    hits.end(), Ranks);
  hits.resize(keep);
  return hits;
}

std::vector<ScoredId> TopK(const InvertedIndex& index, std::string_view query,
                           std::size_t k, const IdSet& exclude) {
  const Tokens tokens = Tokenize(query);
  return TopK(index, tokens, k, exclude);
}

}  // namespace longturn::bm25
