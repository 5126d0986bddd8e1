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
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "longturn/common.hpp"
#include "longturn/text.hpp"

namespace longturn {

// A normalized utterance with its tokens computed once at construction.
class Utterance {
 public:
  // Normalizes `text`; throws Error if nothing is left.
  explicit Utterance(std::string_view text);

  const std::string& text() const { return text_; }
  const Tokens& tokens() const { return tokens_; }

  bool operator==(const Utterance& other) const { return text_ == other.text_; }

 private:
  std::string text_;
  Tokens tokens_;
};

inline constexpr std::string_view kConstructedSource = "constructed";

struct Session {
  std::string id;
  std::vector<Utterance> utterances;
  std::optional<std::string> source;
  // Passed through untouched from the input record.
  nlohmann::json meta;
  // Provenance of constructed sessions: the seed id followed by every
  // appended session id, and one retrieval score per appended session.
  std::vector<std::string> source_ids;
  std::vector<double> sim_scores;

  std::size_t turns() const { return utterances.size(); }
};

// Builds a session from raw utterance strings.
Session MakeSession(std::string id, const std::vector<std::string>& utterances);

// Utterances of `a` followed by those of `b`. The id is "<seed>::<k>" where
// seed is the first provenance id of `a` and k the number of concatenations.
Session ConcatSessions(const Session& a, const Session& b);

// All utterance tokens in order, no separators.
Tokens SessionTokens(const Session& s);

// Utterance tokens joined by kSeparatorToken.
Tokens SessionTokensWithSeparators(const Session& s);

// Utterance texts joined by a single space.
std::string SessionText(const Session& s);

class Corpus {
 public:
  Corpus() = default;

  // Throws Error on duplicate id.
  void Add(Session session);

  std::size_t size() const { return sessions_.size(); }
  bool empty() const { return sessions_.empty(); }

  const Session& operator[](std::size_t pos) const { return sessions_[pos]; }
  const Session& at(const std::string& id) const;
  std::optional<std::size_t> Find(const std::string& id) const;
  bool Contains(const std::string& id) const { return id_map_.count(id) > 0; }

  auto begin() const { return sessions_.begin(); }
  auto end() const { return sessions_.end(); }
  const std::vector<Session>& sessions() const { return sessions_; }

 private:
  std::vector<Session> sessions_;
  std::unordered_map<std::string, std::size_t> id_map_;
};

enum class OnMalformed { kSkip, kAbort };

struct LoadIssue {
  std::size_t line = 0;  // 1-based
  std::string message;
};

struct LoadReport {
  std::size_t lines_read = 0;
  std::vector<LoadIssue> issues;
};

struct LoadResult {
  Corpus corpus;
  LoadReport report;
};

class DuplicateIdError : public Error {
 public:
  DuplicateIdError(std::string id, std::size_t first_line,
                   std::size_t second_line);
  const std::string& id() const { return id_; }
  std::size_t first_line() const { return first_line_; }
  std::size_t second_line() const { return second_line_; }

 private:
  std::string id_;
  std::size_t first_line_;
  std::size_t second_line_;
};

// Reads line-delimited JSON records {id, utterances, meta?}. Blank lines are
// ignored. Malformed records are collected in the report, or abort the load
// with kAbort; a duplicate id always aborts with DuplicateIdError.
LoadResult ReadCorpus(std::istream& in,
                      OnMalformed on_malformed = OnMalformed::kSkip);
LoadResult LoadCorpus(const std::filesystem::path& path,
                      OnMalformed on_malformed = OnMalformed::kSkip);

nlohmann::json SessionToJson(const Session& s);
Session SessionFromJson(const nlohmann::json& record);

void WriteCorpus(const Corpus& corpus, std::ostream& out);
void SaveCorpus(const Corpus& corpus, const std::filesystem::path& path);

struct CorpusStats {
  std::size_t num_sessions = 0;
  double avg_turns = 0.0;
  double avg_utt_tokens = 0.0;
};

CorpusStats ComputeCorpusStats(const Corpus& corpus);

}  // namespace longturn
