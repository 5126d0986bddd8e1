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

#include <sstream>

#include "longturn/corpus.hpp"
#include "longturn/text.hpp"
#include "synthetic.hpp"

using namespace longturn;

namespace {

// Reference LCS by enumerating every pair of start positions.
std::size_t BruteForceLcs(const Tokens& a, const Tokens& b) {
  std::size_t best = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < b.size(); ++j) {
      std::size_t len = 0;
      while (i + len < a.size() && j + len < b.size() && a[i + len] == b[j + len]) ++len;
      best = std::max(best, len);
    }
  }
  return best;
}

Tokens Words(const std::string& s) { return Tokenize(s); }

}  // namespace

TEST_CASE("normalize trims and collapses whitespace") {
  CHECK(Normalize("  hello   world ") == "hello world");
  CHECK(Normalize("") == "");
  CHECK(Normalize("a\t\n b") == "a b");
  CHECK(Normalize("　x　　y") == "x y");
}

TEST_CASE("normalize composes to NFC") {
  const std::string precomposed = "caf\xC3\xA9";
  const std::string decomposed = "cafe\xCC\x81";
  CHECK(precomposed != decomposed);
  CHECK(Normalize(precomposed) == Normalize(decomposed));
  CHECK(Normalize(decomposed) == precomposed);
}

TEST_CASE("normalize is idempotent") {
  Rng rng(7);
  const std::vector<std::string> pieces = {" ", "  ", "\t", "a", "b", "é",
                                           "é", "世", "!", "\n", "Z"};
  for (int trial = 0; trial < 500; ++trial) {
    std::string s;
    const auto len = rng.UniformIndex(12);
    for (std::size_t i = 0; i < len; ++i) s += pieces[rng.UniformIndex(pieces.size())];
    const auto once = Normalize(s);
    CHECK(Normalize(once) == once);
  }
}

TEST_CASE("tokenize") {
  CHECK(Tokenize("Hello 世界!") == Tokens{"hello", "世", "界"});
  CHECK(Tokenize("").empty());
  CHECK(Tokenize("ABC abc") == Tokens{"abc", "abc"});
  CHECK(Tokenize("it's 2 o'clock_now") == Tokens{"it", "s", "2", "o", "clock_now"});
  CHECK(Tokenize("ひらがなカタカナ") == Tokens{"ひ", "ら", "が", "な", "カ", "タ", "カ", "ナ"});
  CHECK(Tokenize("Straße") == Tokens{"straße"});
}

TEST_CASE("lcs length") {
  CHECK(LcsLength(Words("a b c d"), Words("x b c y")) == 2);
  const auto seven = Words("a b c d e f g");
  CHECK(LcsLength(seven, seven) == 7);
  CHECK(LcsLength(Words("a b c"), Words("x y z")) == 0);
  CHECK(LcsLength(Words(""), Words("a")) == 0);
}

TEST_CASE("lcs length matches brute force") {
  Rng rng(11);
  for (int trial = 0; trial < 2000; ++trial) {
    Tokens a(rng.UniformIndex(15)), b(rng.UniformIndex(15));
    for (auto& t : a) t = std::string(1, static_cast<char>('a' + rng.UniformIndex(3)));
    for (auto& t : b) t = std::string(1, static_cast<char>('a' + rng.UniformIndex(3)));
    REQUIRE(LcsLength(a, b) == BruteForceLcs(a, b));
    REQUIRE(LcsLength(a, b) == LcsLength(b, a));
  }
}

TEST_CASE("utterances reject empty text") {
  CHECK_THROWS_AS(Utterance("   "), Error);
  CHECK(Utterance("  hi  there ").text() == "hi there");
}

TEST_CASE("load corpus") {
  SUBCASE("two well-formed lines") {
    std::istringstream in(
        R"({"id":"a","utterances":["hi","hello"]})"
        "\n"
        R"({"id":"b","utterances":["x"],"meta":{"k":1}})"
        "\n");
    auto result = ReadCorpus(in);
    REQUIRE(result.corpus.size() == 2);
    CHECK(result.corpus.at("b").meta["k"] == 1);
    CHECK(result.report.issues.empty());
  }
  SUBCASE("duplicate id names both lines") {
    std::string text;
    for (int line = 1; line <= 8; ++line) {
      const std::string id = (line == 3 || line == 7) ? "s1" : "u" + std::to_string(line);
      text += R"({"id":")" + id + R"(","utterances":["x"]})" "\n";
    }
    std::istringstream in(text);
    try {
      ReadCorpus(in);
      FAIL("expected DuplicateIdError");
    } catch (const DuplicateIdError& e) {
      CHECK(e.first_line() == 3);
      CHECK(e.second_line() == 7);
      CHECK(std::string(e.what()).find("3 and 7") != std::string::npos);
    }
  }
  SUBCASE("empty file") {
    std::istringstream in("");
    CHECK(ReadCorpus(in).corpus.empty());
  }
  SUBCASE("malformed lines are collected or abort") {
    const std::string text =
        R"({"id":"a","utterances":["hi"]})" "\n"
        "not json\n"
        R"({"id":"b","utterances":[]})" "\n"
        R"({"id":"c","utterances":["  "]})" "\n"
        R"({"utterances":["x"]})" "\n";
    std::istringstream skip(text);
    auto result = ReadCorpus(skip, OnMalformed::kSkip);
    CHECK(result.corpus.size() == 1);
    REQUIRE(result.report.issues.size() == 4);
    CHECK(result.report.issues[0].line == 2);
    CHECK(result.report.issues[3].line == 5);
    std::istringstream abort(text);
    CHECK_THROWS_AS(ReadCorpus(abort, OnMalformed::kAbort), Error);
  }
}

TEST_CASE("emit then load reproduces ids and utterances") {
  const auto original = testing::TopicCorpus(50, 5, 1, 6, 3);
  std::stringstream buf;
  WriteCorpus(original, buf);
  const auto reloaded = ReadCorpus(buf).corpus;
  REQUIRE(reloaded.size() == original.size());
  for (std::size_t i = 0; i < original.size(); ++i) {
    CHECK(reloaded[i].id == original[i].id);
    CHECK(reloaded[i].utterances == original[i].utterances);
  }
  std::stringstream again;
  WriteCorpus(reloaded, again);
  std::stringstream first;
  WriteCorpus(original, first);
  CHECK(again.str() == first.str());
}

TEST_CASE("provenance fields round-trip") {
  Session s = MakeSession("x::1", {"a", "b"});
  s.source = "constructed";
  s.source_ids = {"x", "y"};
  s.sim_scores = {0.25};
  const auto back = SessionFromJson(SessionToJson(s));
  CHECK(back.source_ids == s.source_ids);
  CHECK(back.sim_scores == s.sim_scores);
  CHECK(back.source == s.source);
}

TEST_CASE("concat sessions") {
  const auto a = MakeSession("a", {"a1", "a2"});
  const auto b = MakeSession("b", {"b1", "b2", "b3"});
  const auto c = MakeSession("c", {"c1"});
  const auto ab = ConcatSessions(a, b);
  CHECK(ab.turns() == 5);
  CHECK(ab.utterances.front().text() == "a1");
  CHECK(ab.utterances[2].text() == "b1");
  CHECK(ab.id == "a::1");
  CHECK(ab.source == std::string(kConstructedSource));
  CHECK(ab.source_ids == std::vector<std::string>{"a", "b"});

  const auto left = ConcatSessions(ab, c);
  const auto right = ConcatSessions(a, ConcatSessions(b, c));
  CHECK(left.utterances == right.utterances);
  CHECK(left.id == "a::2");
  CHECK(left.turns() == a.turns() + b.turns() + c.turns());
}

TEST_CASE("corpus stats") {
  Corpus c;
  c.Add(MakeSession("a", {"x y", "z"}));
  c.Add(MakeSession("b", {"p", "q", "r", "s"}));
  const auto stats = ComputeCorpusStats(c);
  CHECK(stats.num_sessions == 2);
  CHECK(stats.avg_turns == doctest::Approx(3.0));
  CHECK(stats.avg_utt_tokens == doctest::Approx(7.0 / 6.0));

  const auto empty = ComputeCorpusStats(Corpus{});
  CHECK(empty.num_sessions == 0);
  CHECK(empty.avg_turns == 0.0);
  CHECK(empty.avg_utt_tokens == 0.0);
}

TEST_CASE("corpus lookup") {
  Corpus c;
  c.Add(MakeSession("a", {"x"}));
  CHECK(c.Contains("a"));
  CHECK_FALSE(c.Find("b").has_value());
  CHECK_THROWS_AS(c.at("b"), Error);
  CHECK_THROWS_AS(c.Add(MakeSession("a", {"y"})), Error);
}
