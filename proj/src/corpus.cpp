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

#include "longturn/corpus.hpp"

#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>

namespace longturn {

Utterance::Utterance(std::string_view text)
    : text_(Normalize(text)), tokens_(Tokenize(text_)) {
  if (text_.empty()) throw Error("utterance is empty after normalization");
}

Session MakeSession(std::string id, const std::vector<std::string>& utterances) {
  Session s;
  s.id = std::move(id);
  s.utterances.reserve(utterances.size());
  for (const auto& u : utterances) s.utterances.emplace_back(u);
  return s;
}

Session ConcatSessions(const Session& a, const Session& b) {
  Session out;
  out.source = std::string(kConstructedSource);
  out.source_ids = a.source_ids.empty() ? std::vector<std::string>{a.id}
                                        : a.source_ids;
  if (b.source_ids.empty()) {
    out.source_ids.push_back(b.id);
  } else {
    out.source_ids.insert(out.source_ids.end(), b.source_ids.begin(),
                          b.source_ids.end());
  }
  out.sim_scores = a.sim_scores;
  out.sim_scores.insert(out.sim_scores.end(), b.sim_scores.begin(),
                        b.sim_scores.end());
  out.id = out.source_ids.front() + "::" +
           std::to_string(out.source_ids.size() - 1);
  out.meta = a.meta;
  out.utterances.reserve(a.turns() + b.turns());
  out.utterances.insert(out.utterances.end(), a.utterances.begin(),
                        a.utterances.end());
  out.utterances.insert(out.utterances.end(), b.utterances.begin(),
                        b.utterances.end());
  return out;
}

Tokens SessionTokens(const Session& s) {
  Tokens out;
  for (const auto& u : s.utterances) {
    out.insert(out.end(), u.tokens().begin(), u.tokens().end());
  }
  return out;
}

Tokens SessionTokensWithSeparators(const Session& s) {
  Tokens out;
  for (std::size_t i = 0; i < s.utterances.size(); ++i) {
    if (i > 0) out.emplace_back(kSeparatorToken);
    const auto& t = s.utterances[i].tokens();
    out.insert(out.end(), t.begin(), t.end());
  }
  return out;
}

std::string SessionText(const Session& s) {
  std::string out;
  for (std::size_t i = 0; i < s.utterances.size(); ++i) {
    if (i > 0) out.push_back(' ');
    out += s.utterances[i].text();
  }
  return out;
}

void Corpus::Add(Session session) {
  if (session.utterances.empty()) {
    throw Error("session '" + session.id + "' has no utterances");
  }
  auto [it, inserted] = id_map_.emplace(session.id, sessions_.size());
  if (!inserted) throw Error("duplicate session id '" + session.id + "'");
  sessions_.push_back(std::move(session));
}

const Session& Corpus::at(const std::string& id) const {
  auto it = id_map_.find(id);
  if (it == id_map_.end()) throw Error("unknown session id '" + id + "'");
  return sessions_[it->second];
}

std::optional<std::size_t> Corpus::Find(const std::string& id) const {
  auto it = id_map_.find(id);
  if (it == id_map_.end()) return std::nullopt;
  return it->second;
}

DuplicateIdError::DuplicateIdError(std::string id, std::size_t first_line,
                                   std::size_t second_line)
    : Error("duplicate session id '" + id + "' on lines " +
            std::to_string(first_line) + " and " + std::to_string(second_line)),
      id_(std::move(id)),
      first_line_(first_line),
      second_line_(second_line) {}

Session SessionFromJson(const nlohmann::json& record) {
  if (!record.is_object()) throw Error("record is not a JSON object");
  if (!record.contains("id") || !record["id"].is_string()) {
    throw Error("missing string field 'id'");
  }
  if (!record.contains("utterances") || !record["utterances"].is_array() ||
      record["utterances"].empty()) {
    throw Error("field 'utterances' must be a non-empty array");
  }
  Session s;
  s.id = record["id"].get<std::string>();
  for (const auto& u : record["utterances"]) {
    if (!u.is_string()) throw Error("utterance is not a string");
    s.utterances.emplace_back(u.get<std::string>());
  }
  if (auto it = record.find("meta"); it != record.end()) s.meta = *it;
  if (auto it = record.find("source"); it != record.end() && it->is_string()) {
    s.source = it->get<std::string>();
  }
  if (auto it = record.find("source_ids"); it != record.end()) {
    s.source_ids = it->get<std::vector<std::string>>();
  }
  if (auto it = record.find("sim_scores"); it != record.end()) {
    s.sim_scores = it->get<std::vector<double>>();
  }
  return s;
}

nlohmann::json SessionToJson(const Session& s) {
  nlohmann::json j;
  j["id"] = s.id;
  auto& utts = j["utterances"] = nlohmann::json::array();
  for (const auto& u : s.utterances) utts.push_back(u.text());
  if (!s.meta.is_null()) j["meta"] = s.meta;
  if (s.source) j["source"] = *s.source;
  if (!s.source_ids.empty()) {
    j["source_ids"] = s.source_ids;
    j["sim_scores"] = s.sim_scores;
  }
  return j;
}

LoadResult ReadCorpus(std::istream& in, OnMalformed on_malformed) {
  LoadResult result;
  std::unordered_map<std::string, std::size_t> first_seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    ++result.report.lines_read;
    Session s;
    try {
      s = SessionFromJson(nlohmann::json::parse(line));
    } catch (const std::exception& e) {
      if (on_malformed == OnMalformed::kAbort) {
        throw Error("line " + std::to_string(line_no) + ": " + e.what());
      }
      result.report.issues.push_back({line_no, e.what()});
      continue;
    }
    auto [it, inserted] = first_seen.emplace(s.id, line_no);
    if (!inserted) throw DuplicateIdError(s.id, it->second, line_no);
    result.corpus.Add(std::move(s));
  }
  return result;
}

LoadResult LoadCorpus(const std::filesystem::path& path,
                      OnMalformed on_malformed) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open corpus file '" + path.string() + "'");
  return ReadCorpus(in, on_malformed);
}

void WriteCorpus(const Corpus& corpus, std::ostream& out) {
  for (const auto& s : corpus) out << SessionToJson(s).dump() << '\n';
}

void SaveCorpus(const Corpus& corpus, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write corpus file '" + path.string() + "'");
  WriteCorpus(corpus, out);
}

CorpusStats ComputeCorpusStats(const Corpus& corpus) {
  CorpusStats stats;
  stats.num_sessions = corpus.size();
  std::size_t turns = 0;
  std::size_t tokens = 0;
  for (const auto& s : corpus) {
    turns += s.turns();
    for (const auto& u : s.utterances) tokens += u.tokens().size();
  }
  if (stats.num_sessions > 0) {
    stats.avg_turns = static_cast<double>(turns) / stats.num_sessions;
  }
  if (turns > 0) stats.avg_utt_tokens = static_cast<double>(tokens) / turns;
  return stats;
}

}  // namespace longturn
