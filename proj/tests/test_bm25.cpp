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

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "longturn/bm25.hpp"

using namespace longturn;

namespace {

// Direct evaluation of the Okapi BM25 formula from raw token lists.
struct Bm25Oracle {
  std::vector<Tokens> docs;
  double k1 = 1.2;
  double b = 0.75;

  double Score(const Tokens& query, std::size_t d) const {
    double avgdl = 0.0;
    for (const auto& doc : docs) avgdl += static_cast<double>(doc.size());
    avgdl /= static_cast<double>(docs.size());
    const double n = static_cast<double>(docs.size());
    double score = 0.0;
    for (const auto& t : query) {
      const auto tf = static_cast<double>(std::count(docs[d].begin(), docs[d].end(), t));
      if (tf == 0) continue;
      double df = 0;
      for (const auto& doc : docs) df += std::find(doc.begin(), doc.end(), t) != doc.end();
      const double idf = std::log(1.0 + (n - df + 0.5) / (df + 0.5));
      const double dl = static_cast<double>(docs[d].size());
      score += idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * dl / avgdl));
    }
    return score;
  }

  std::vector<std::pair<std::size_t, double>> TopK(const Tokens& query, std::size_t k,
                                                   const std::set<std::size_t>& excluded) const {
    std::vector<std::pair<std::size_t, double>> all;
    for (std::size_t d = 0; d < docs.size(); ++d) {
      if (excluded.count(d)) continue;
      const double s = Score(query, d);
      if (s > 0) all.emplace_back(d, s);
    }
    std::stable_sort(all.begin(), all.end(),
                     [](const auto& x, const auto& y) { return x.second > y.second; });
    if (all.size() > k) all.resize(k);
    return all;
  }
};

std::vector<std::string> Ids(std::size_t n) {
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < n; ++i) ids.push_back("d" + std::to_string(i));
  return ids;
}

bm25::InvertedIndex IndexOf(const std::vector<std::string>& texts) {
  std::vector<Tokens> docs;
  for (const auto& t : texts) docs.push_back(Tokenize(t));
  return bm25::InvertedIndex::Build(Ids(texts.size()), docs);
}

}  // namespace

TEST_CASE("document frequencies and lengths") {
  const auto index = IndexOf({"a b", "b c"});
  CHECK(index.df("b") == 2);
  CHECK(index.df("a") == 1);
  CHECK(index.df("zzz") == 0);
  CHECK(index.avgdl() == doctest::Approx(2.0));
  CHECK(index.num_docs() == 2);
}

TEST_CASE("term frequencies sum to document length") {
  const auto index = IndexOf({"a a b c", "c c c", "d"});
  for (std::size_t d = 0; d < 3; ++d) {
    std::uint32_t sum = 0;
    for (const char* t : {"a", "b", "c", "d"}) sum += index.tf(t, d);
    CHECK(sum == index.doc_len(d));
  }
}

TEST_CASE("hand-evaluated score is ln 2") {
  // N = 2, df = 1, tf = 1, doc length = avgdl
  const auto index = IndexOf({"a b", "c d"});
  const Tokens q{"a"};
  CHECK(bm25::Score(index, q, 0) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(std::abs(bm25::Score(index, q, 0) - 0.6931) < 1e-4);
  CHECK(bm25::Score(index, Tokens{"zzz"}, 0) == 0.0);
  CHECK(bm25::Score(index, Tokens{"a", "a"}, 0) ==
        doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("text scoring agrees with indexed scoring") {
  const auto index = IndexOf({"a b a", "b c", "c d e f"});
  const Tokens q{"a", "c", "b", "a"};
  for (std::size_t d = 0; d < 3; ++d) {
    const Tokens doc = Tokenize(std::vector<std::string>{"a b a", "b c", "c d e f"}[d]);
    CHECK(bm25::ScoreText(index, q, doc) == doctest::Approx(bm25::Score(index, q, d)));
  }
}

TEST_CASE("top-k") {
  const auto index = IndexOf({"x y", "y z", "apple pie", "z z"});
  SUBCASE("single matching document") {
    const auto hits = bm25::TopK(index, "apple", 3);
    REQUIRE(hits.size() == 1);
    CHECK(hits[0].id == "d2");
    CHECK(hits[0].score > 0);
  }
  SUBCASE("exclusion") {
    CHECK(bm25::TopK(index, "apple", 3, {"d2"}).empty());
  }
  SUBCASE("ties break by position") {
    const auto tie = IndexOf({"q r", "q r", "q r"});
    const auto hits = bm25::TopK(tie, "q", 2);
    REQUIRE(hits.size() == 2);
    CHECK(hits[0].id == "d0");
    CHECK(hits[1].id == "d1");
    CHECK(hits[0].score == hits[1].score);
  }
  SUBCASE("k must be positive") {
    CHECK_THROWS_AS(bm25::TopK(index, "apple", 0), Error);
  }
}

TEST_CASE("empty corpus is rejected") {
  CHECK_THROWS_AS(bm25::InvertedIndex::Build({}, {}), Error);
  CHECK_THROWS_AS(bm25::BuildIndex(Corpus{}), Error);
}

TEST_CASE("top-k equals exhaustive scoring on random corpora") {
  Rng rng(2024);
  for (int trial = 0; trial < 200; ++trial) {
    Bm25Oracle oracle;
    const std::size_t n = 1 + rng.UniformIndex(60);
    const std::size_t vocab = 2 + rng.UniformIndex(20);
    for (std::size_t d = 0; d < n; ++d) {
      Tokens doc(rng.UniformIndex(12));
      for (auto& t : doc) t = "t" + std::to_string(rng.UniformIndex(vocab));
      oracle.docs.push_back(doc);
    }
    const auto index = bm25::InvertedIndex::Build(Ids(n), oracle.docs);
    Tokens query(1 + rng.UniformIndex(5));
    for (auto& t : query) t = "t" + std::to_string(rng.UniformIndex(vocab + 3));
    IdSet exclude;
    std::set<std::size_t> excluded;
    for (std::size_t d = 0; d < n; ++d) {
      if (rng.Uniform01() < 0.1) {
        exclude.insert("d" + std::to_string(d));
        excluded.insert(d);
      }
    }
    const std::size_t k = 1 + rng.UniformIndex(n + 2);
    const auto got = bm25::TopK(index, query, k, exclude);
    const auto want = oracle.TopK(query, k, excluded);
    REQUIRE(got.size() == want.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
      CHECK(got[i].position == want[i].first);
      CHECK(got[i].score == doctest::Approx(want[i].second).epsilon(1e-12));
    }
  }
}

TEST_CASE("adding a document only changes collection statistics") {
  std::vector<Tokens> docs = {Tokenize("a b b"), Tokenize("c a")};
  const auto before = bm25::InvertedIndex::Build(Ids(2), docs);
  docs.push_back(Tokenize("b d d d"));
  const auto after = bm25::InvertedIndex::Build(Ids(3), docs);
  for (const char* t : {"a", "b", "c"}) {
    for (std::size_t d = 0; d < 2; ++d) CHECK(before.tf(t, d) == after.tf(t, d));
  }
  CHECK(after.df("b") == before.df("b") + 1);
  CHECK(after.avgdl() != before.avgdl());
}

TEST_CASE("build is deterministic and persistence is bit-exact") {
  Corpus c;
  c.Add(MakeSession("s1", {"hello there", "general kenobi"}));
  c.Add(MakeSession("s2", {"你好 世界", "hello again"}));
  c.Add(MakeSession("s3", {"nothing in common"}));
  const auto a = bm25::BuildIndex(c);
  const auto b = bm25::BuildIndex(c);
  CHECK(a == b);

  std::stringstream first;
  a.Save(first);
  const std::string bytes = first.str();
  std::stringstream in(bytes);
  const auto loaded = bm25::InvertedIndex::Load(in);
  CHECK(loaded == a);
  std::stringstream second;
  loaded.Save(second);
  CHECK(second.str() == bytes);

  std::stringstream garbage("not an index at all");
  CHECK_THROWS_AS(bm25::InvertedIndex::Load(garbage), Error);
}
