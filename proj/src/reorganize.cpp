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

#include "longturn/reorganize.hpp"

#include <cmath>
#include <unordered_set>

#include "parallel.hpp"

namespace longturn {
namespace {

// The session being built, with the lookups the dialogue-level filter needs.
struct Context {
  std::unordered_set<std::string> utterances;
  Tokens tokens;

  void Append(const Session& s) {
    for (const auto& u : s.utterances) {
      utterances.insert(u.text());
      tokens.insert(tokens.end(), u.tokens().begin(), u.tokens().end());
    }
  }

  int Weight(const Session& candidate, std::size_t max_lcs) const {
    for (const auto& u : candidate.utterances) {
      if (utterances.count(u.text())) return 0;
    }
    return LcsLength(tokens, SessionTokens(candidate)) > max_lcs ? 0 : 1;
  }
};

}  // namespace

int DialogueWeight(const Session& candidate, const Session& context,
                   std::size_t max_lcs) {
  Context ctx;
  ctx.Append(context);
  return ctx.Weight(candidate, max_lcs);
}

std::uint64_t SamplerState::count(const std::string& id) const {
  std::lock_guard lock(mu_);
  auto it = counts_.find(id);
  return it == counts_.end() ? 0 : it->second;
}

void SamplerState::Increment(const std::string& id) {
  std::lock_guard lock(mu_);
  ++counts_[id];
  ++total_;
}

std::uint64_t SamplerState::total() const {
  std::lock_guard lock(mu_);
  return total_;
}

std::unordered_map<std::string, std::uint64_t> SamplerState::counts() const {
  std::lock_guard lock(mu_);
  return counts_;
}

double CorpusWeight(const SamplerState& state, const std::string& id) {
  return 1.0 / (static_cast<double>(state.count(id)) + 1.0);
}

std::optional<std::size_t> SampleCandidate(std::span<const ScoredId> candidates,
                                           std::span<const double> weights,
                                           Rng& rng) {
  if (candidates.size() != weights.size()) {
    throw Error("sample_candidate: one weight per candidate required");
  }
  double total = 0.0;
  for (double w : weights) {
    if (!std::isfinite(w) || w < 0.0) {
      throw Error("sample_candidate: weights must be finite and non-negative");
    }
    total += w;
  }
  if (total <= 0.0) return std::nullopt;
  const double u = rng.Uniform01() * total;
  double cumulative = 0.0;
  std::optional<std::size_t> last_positive;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] <= 0.0) continue;
    last_positive = i;
    cumulative += weights[i];
    if (u < cumulative) return i;
  }
  // u can reach the rounded total; fall back to the last eligible entry.
  return last_positive;
}

void RescaleConfig::Validate() const {
  if (updates < 1) throw Error("L (updates) must be at least 1");
  if (top_k < 1) throw Error("K (top_k) must be at least 1");
  if (max_lcs < 1) throw Error("N (max_lcs) must be at least 1");
}

nlohmann::json ToJson(const RescaleConfig& c) {
  return {{"L", c.updates},
          {"K", c.top_k},
          {"N", c.max_lcs},
          {"dialogue_weight", c.enable_dialogue_weight},
          {"corpus_weight", c.enable_corpus_weight},
          {"widen_on_exhaustion", c.widen_on_exhaustion},
          {"seed", c.seed},
          {"workers", c.workers}};
}

std::string_view ToString(StopReason reason) {
  switch (reason) {
    case StopReason::kNone:
      return "none";
    case StopReason::kNoCandidates:
      return "no_candidates";
    case StopReason::kAllFiltered:
      return "all_filtered";
  }
  return "unknown";
}

nlohmann::json ToJson(const RescaleTrace& trace) {
  nlohmann::json j;
  j["seed_id"] = trace.seed_id;
  auto& steps = j["steps"] = nlohmann::json::array();
  for (const auto& s : trace.steps) {
    nlohmann::json step;
    step["query_id"] = s.query_id;
    auto& hits = step["retrieved"] = nlohmann::json::array();
    for (const auto& h : s.retrieved) hits.push_back({{"id", h.id}, {"score", h.score}});
    step["weights"] = s.weights;
    if (s.chosen_id) step["chosen_id"] = *s.chosen_id;
    if (s.stop != StopReason::kNone) step["stop"] = ToString(s.stop);
    steps.push_back(std::move(step));
  }
  return j;
}

Reorganizer::Reorganizer(const Corpus& pool, const DenseIndex& index,
                         const SessionEncoder& query_encoder, RescaleConfig config)
    : pool_(pool), index_(index), query_encoder_(query_encoder), config_(config) {
  config_.Validate();
  if (query_encoder_.dim() != index_.dim()) {
    throw Error("query encoder dimension " + std::to_string(query_encoder_.dim()) +
                " does not match index dimension " + std::to_string(index_.dim()));
  }
}

std::pair<Session, RescaleTrace> Reorganizer::RescaleSession(
    const Session& seed, SamplerState& state) const {
  Rng rng(DeriveSeed(state.seed(), "rescale:" + seed.id));
  Session out;
  out.source = std::string(kConstructedSource);
  out.meta = seed.meta;
  out.utterances = seed.utterances;
  out.source_ids = {seed.id};

  RescaleTrace trace;
  trace.seed_id = seed.id;
  Context context;
  context.Append(seed);
  IdSet exclude{seed.id};
  const Session* query = &seed;

  for (int t = 1; t <= config_.updates; ++t) {
    RescaleStep step;
    step.query_id = query->id;
    const Vector<float> q = query_encoder_.Encode(*query);
    if (q.size() != index_.dim()) {
      throw Error("query encoding dimension does not match the index");
    }
    std::optional<std::size_t> choice;
    std::size_t k = config_.top_k;
    for (int attempt = 0; attempt < 2; ++attempt) {
      step.retrieved = SearchTopK(index_, q, k, exclude);
      step.weights.clear();
      for (const auto& hit : step.retrieved) {
        const Session& cand = pool_.at(hit.id);
        double w = 1.0;
        if (config_.enable_dialogue_weight) w *= context.Weight(cand, config_.max_lcs);
        if (config_.enable_corpus_weight && w > 0.0) w *= CorpusWeight(state, hit.id);
        step.weights.push_back(w);
      }
      choice = SampleCandidate(step.retrieved, step.weights, rng);
      if (choice || !config_.widen_on_exhaustion || step.retrieved.size() < k) break;
      k *= 2;
    }
    if (!choice) {
      step.stop = step.retrieved.empty() ? StopReason::kNoCandidates
                                         : StopReason::kAllFiltered;
      trace.steps.push_back(std::move(step));
      break;
    }
    const ScoredId& hit = step.retrieved[*choice];
    const Session& chosen = pool_.at(hit.id);
    step.chosen_id = hit.id;
    out.utterances.insert(out.utterances.end(), chosen.utterances.begin(),
                          chosen.utterances.end());
    out.source_ids.push_back(hit.id);
    out.sim_scores.push_back(hit.score);
    context.Append(chosen);
    exclude.insert(hit.id);
    state.Increment(hit.id);
    query = &chosen;
    trace.steps.push_back(std::move(step));
  }
  out.id = seed.id + "::" + std::to_string(out.source_ids.size() - 1);
  return {std::move(out), std::move(trace)};
}

nlohmann::json ToJson(const RescaleReport& r) {
  nlohmann::json j;
  j["mode"] = r.mode;
  j["sessions"] = r.sessions;
  j["avg_turns_before"] = r.avg_turns_before;
  j["avg_turns_after"] = r.avg_turns_after;
  j["turn_ratio"] = r.avg_turns_before > 0 ? r.avg_turns_after / r.avg_turns_before : 0.0;
  j["total_selections"] = r.total_selections;
  auto& by_step = j["early_stops_by_step"] = nlohmann::json::object();
  for (const auto& [step, n] : r.early_stops_by_step) by_step[std::to_string(step)] = n;
  j["early_stops_by_reason"] = r.early_stops_by_reason;
  j["overlap_score"] = r.overlap_score;
  j["repeat_sampling"] = {{"top_k", r.repeat_sampling_top_k},
                          {"mean", r.repeat_sampling.mean},
                          {"std", r.repeat_sampling.std},
                          {"population", r.repeat_sampling.population},
                          {"empty", r.repeat_sampling.empty}};
  j["config"] = ToJson(r.config);
  return j;
}

RescaleResult RescaleCorpus(const Corpus& corpus, const DenseIndex& index,
                            const SessionEncoder& query_encoder,
                            const RescaleConfig& config) {
  for (const auto& id : index.ids()) {
    if (!corpus.Contains(id)) {
      throw Error("index row '" + id + "' is not a session of the corpus");
    }
  }
  const Reorganizer reorganizer(corpus, index, query_encoder, config);
  SamplerState state(config.seed);

  std::vector<Session> outputs(corpus.size());
  RescaleResult result;
  result.traces.resize(corpus.size());
  internal::ParallelFor(corpus.size(), config.workers, [&](std::size_t i) {
    auto [session, trace] = reorganizer.RescaleSession(corpus[i], state);
    outputs[i] = std::move(session);
    result.traces[i] = std::move(trace);
  });

  auto& report = result.report;
  report.mode = config.workers > 1 ? "parallel" : "sequential";
  report.config = config;
  report.sessions = corpus.size();
  report.avg_turns_before = ComputeCorpusStats(corpus).avg_turns;
  for (const auto& trace : result.traces) {
    if (!trace.steps.empty() && trace.steps.back().stop != StopReason::kNone) {
      ++report.early_stops_by_step[static_cast<int>(trace.steps.size())];
      ++report.early_stops_by_reason[std::string(ToString(trace.steps.back().stop))];
    }
  }
  for (auto& s : outputs) result.corpus.Add(std::move(s));
  report.avg_turns_after = ComputeCorpusStats(result.corpus).avg_turns;
  report.overlap_score = OverlapScore(result.corpus).value;
  result.counts = state.counts();
  report.total_selections = state.total();
  report.repeat_sampling = ComputeRepeatSampling(result.counts, report.repeat_sampling_top_k);
  return result;
}

std::vector<DedupViolation> AuditDedup(const Corpus& output, const Corpus& pool,
                                       std::size_t max_lcs) {
  std::vector<DedupViolation> violations;
  for (const auto& s : output) {
    if (s.source_ids.empty()) continue;
    Context context;
    std::vector<Utterance> rebuilt;
    const Session& seed = pool.at(s.source_ids.front());
    context.Append(seed);
    rebuilt = seed.utterances;
    for (std::size_t j = 1; j < s.source_ids.size(); ++j) {
      const Session& seg = pool.at(s.source_ids[j]);
      DedupViolation v{s.id, seg.id, j, false, 0};
      for (const auto& u : seg.utterances) {
        if (context.utterances.count(u.text())) v.exact_utterance = true;
      }
      v.lcs = LcsLength(context.tokens, SessionTokens(seg));
      if (v.exact_utterance || v.lcs > max_lcs) violations.push_back(v);
      context.Append(seg);
      rebuilt.insert(rebuilt.end(), seg.utterances.begin(), seg.utterances.end());
    }
    if (rebuilt != s.utterances) {
      throw Error("output session '" + s.id + "' does not match its provenance");
    }
  }
  return violations;
}

}  // namespace longturn
