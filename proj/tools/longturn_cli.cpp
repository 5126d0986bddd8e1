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

// longturn: command-line driver for the corpus rescaling pipeline.
//
//   longturn [--config FILE] [--seed N] <subcommand> [flags]
//
// Every flag can also be given in a TOML config file, top-level keys for the
// global flags and a [subcommand] table for the rest; the key is the flag
// name without dashes ("top-k = 8"). Flags override the file. The default
// config path comes from $LONGTURN_CONFIG.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "longturn/bm25.hpp"
#include "longturn/corpus.hpp"
#include "longturn/dense_index.hpp"
#include "longturn/encoder.hpp"
#include "longturn/metrics.hpp"
#include "longturn/pairgen.hpp"
#include "longturn/reorganize.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace longturn::cli {
namespace {

constexpr const char* kConfigEnv = "LONGTURN_CONFIG";

class Log {
 public:
  explicit Log(std::string command) : command_(std::move(command)) {}

  void Write(std::string_view level, std::string_view event, json fields = json::object()) const {
    json line{{"level", level}, {"cmd", command_}, {"event", event}};
    line.update(fields);
    std::cerr << line.dump() << '\n';
  }
  void Info(std::string_view event, json fields = json::object()) const {
    Write("info", event, std::move(fields));
  }
  void Warn(std::string_view event, json fields = json::object()) const {
    Write("warning", event, std::move(fields));
  }

 private:
  std::string command_;
};

std::string Hex(std::uint64_t v) {
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << v;
  return out.str();
}

std::string ReadFile(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// Digest over the bytes of every input, in order.
std::string InputDigest(const std::vector<fs::path>& paths) {
  std::uint64_t h = 0;
  for (const auto& p : paths) h = Hash64(ReadFile(p), h);
  return Hex(h);
}

std::ofstream OpenOutput(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  return out;
}

void WriteJson(const fs::path& path, const json& doc) {
  auto out = OpenOutput(path);
  out << doc.dump(2) << '\n';
}

void RequireInput(const fs::path& path) {
  if (!fs::exists(path)) throw Error("input not found: '" + path.string() + "'");
}

Corpus ReadCorpusFile(const fs::path& path, OnMalformed mode, const Log& log) {
  RequireInput(path);
  auto loaded = LoadCorpus(path, mode);
  for (const auto& issue : loaded.report.issues) {
    log.Warn("malformed_record",
             {{"path", path.string()}, {"line", issue.line}, {"error", issue.message}});
  }
  log.Info("corpus_loaded", {{"path", path.string()},
                             {"sessions", loaded.corpus.size()},
                             {"skipped", loaded.report.issues.size()}});
  return std::move(loaded.corpus);
}

std::vector<TrainingInstance> ReadPairsFile(const fs::path& path) {
  RequireInput(path);
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  return ReadTrainingSet(in);
}

OnMalformed ParseMalformed(const std::string& s) {
  if (s == "skip") return OnMalformed::kSkip;
  if (s == "abort") return OnMalformed::kAbort;
  throw Error("on-malformed must be 'skip' or 'abort', got '" + s + "'");
}

// Either a trained checkpoint (query or candidate side) or a table of
// precomputed embeddings keyed by session id.
std::shared_ptr<const SessionEncoder> LoadEncoder(const std::string& checkpoint,
                                                  const std::string& embeddings, Side side,
                                                  const Log& log) {
  if (checkpoint.empty() == embeddings.empty()) {
    throw Error("give exactly one of --checkpoint or --embeddings");
  }
  if (!checkpoint.empty()) {
    RequireInput(checkpoint);
    auto enc = std::make_shared<const DualEncoder<float>>(LoadCheckpoint(fs::path(checkpoint)));
    log.Info("checkpoint_loaded", {{"path", checkpoint},
                                   {"hash_bits", enc->hash_bits()},
                                   {"dim", enc->dim()}});
    return std::make_shared<LinearSessionEncoder>(enc, side);
  }
  RequireInput(embeddings);
  auto table = std::make_shared<EmbeddingTable>(LoadEmbeddings(fs::path(embeddings)));
  log.Info("embeddings_loaded",
           {{"path", embeddings}, {"vectors", table->size()}, {"dim", table->dim()}});
  return table;
}

std::vector<fs::path> ExistingPaths(std::initializer_list<std::string> paths) {
  std::vector<fs::path> out;
  for (const auto& p : paths) {
    if (!p.empty()) out.emplace_back(p);
  }
  return out;
}

struct Global {
  std::uint64_t seed = 0;
};

// ---------------------------------------------------------------- build-pairs

struct BuildPairsOptions {
  std::string input;
  std::string output;
  std::string report;
  std::size_t n_easy = 7;
  std::size_t n_hard = 8;
  std::string on_malformed = "skip";
};

json ToJson(const BuildPairsOptions& o, const Global& g) {
  return {{"input", o.input},     {"output", o.output}, {"report", o.report},
          {"n-easy", o.n_easy},   {"n-hard", o.n_hard}, {"on-malformed", o.on_malformed},
          {"seed", g.seed}};
}

int RunBuildPairs(const BuildPairsOptions& o, const Global& g, const Log& log) {
  const json config = ToJson(o, g);
  log.Info("config", {{"config", config}});
  const Corpus corpus = ReadCorpusFile(o.input, ParseMalformed(o.on_malformed), log);
  std::size_t eligible = 0;
  for (const auto& s : corpus) eligible += s.turns() >= kMinTrainingTurns;

  TrainingSet set;
  set.excluded_short = corpus.size() - eligible;
  if (eligible == 0) {
    log.Warn("no_eligible_sessions",
             {{"sessions", corpus.size()}, {"min_turns", kMinTrainingTurns}});
  } else {
    const PairConfig pc{o.n_easy, o.n_hard, g.seed};
    set = MakeTrainingSet(corpus, BuildSegmentIndex(corpus, g.seed), pc);
  }
  {
    auto out = OpenOutput(o.output);
    WriteTrainingSet(set.instances, out);
  }
  std::size_t hard = 0;
  for (const auto& inst : set.instances) {
    for (const auto& n : inst.negatives) hard += n.kind == NegativeKind::kHard;
  }
  const json report{{"sessions", corpus.size()},
                    {"instances", set.instances.size()},
                    {"excluded_short", set.excluded_short},
                    {"hard_negatives", hard},
                    {"config", config},
                    {"input_digest", InputDigest({o.input})}};
  if (!o.report.empty()) WriteJson(o.report, report);
  log.Info("done", {{"report", report}});
  std::cout << "build-pairs: " << set.instances.size() << " instances from "
            << corpus.size() << " sessions (" << set.excluded_short
            << " with fewer than 4 turns excluded) -> " << o.output << '\n';
  return 0;
}

// ---------------------------------------------------------------------- train

struct TrainOptions {
  std::string pairs;
  std::string output;
  std::string report;
  std::string resume_from;
  TrainConfig train;
  std::string optimizer = "sgd";
};

json ToJson(const TrainOptions& o, const Global& g) {
  const auto& t = o.train;
  return {{"pairs", o.pairs},
          {"output", o.output},
          {"report", o.report},
          {"resume-from", o.resume_from},
          {"hash-bits", t.hash_bits},
          {"dim", t.dim},
          {"epochs", t.epochs},
          {"batch-size", t.batch_size},
          {"lr", t.lr},
          {"optimizer", o.optimizer},
          {"momentum", t.momentum},
          {"adam-beta1", t.adam_beta1},
          {"adam-beta2", t.adam_beta2},
          {"adam-eps", t.adam_eps},
          {"init-scale", t.init_scale},
          {"clip-norm", t.clip_norm},
          {"val-fraction", t.val_fraction},
          {"in-batch", t.use_in_batch},
          {"seed", g.seed}};
}

int RunTrain(TrainOptions o, const Global& g, const Log& log) {
  if (o.optimizer == "sgd") {
    o.train.optimizer = Optimizer::kSgdMomentum;
  } else if (o.optimizer == "adam") {
    o.train.optimizer = Optimizer::kAdam;
  } else {
    throw Error("optimizer must be 'sgd' or 'adam', got '" + o.optimizer + "'");
  }
  o.train.seed = g.seed;
  const json config = ToJson(o, g);
  log.Info("config", {{"config", config}});

  const auto instances = ReadPairsFile(o.pairs);
  log.Info("pairs_loaded", {{"path", o.pairs}, {"instances", instances.size()}});
  std::optional<DualEncoder<float>> init;
  if (!o.resume_from.empty()) {
    RequireInput(o.resume_from);
    init = LoadCheckpoint(fs::path(o.resume_from));
    if (init->hash_bits() != o.train.hash_bits || init->dim() != o.train.dim) {
      log.Warn("resume_shape", {{"hash_bits", init->hash_bits()}, {"dim", init->dim()},
                                {"note", "checkpoint shape overrides hash-bits and dim"}});
    }
    log.Info("resumed", {{"path", o.resume_from}});
  }
  const auto result =
      Train(instances, o.train, init ? &*init : nullptr, [&](const EpochStats& e) {
        log.Info("epoch", {{"epoch", e.epoch},
                           {"mean_loss", e.mean_loss},
                           {"val_recall_at_1", e.val_recall_at_1}});
      });
  SaveCheckpoint(result.encoder, fs::path(o.output));

  json history = json::array();
  for (const auto& e : result.history) {
    history.push_back({{"epoch", e.epoch},
                       {"mean_loss", e.mean_loss},
                       {"val_recall_at_1", e.val_recall_at_1}});
  }
  const json report{{"train_size", result.train_size},
                    {"val_size", result.val_size},
                    {"best_epoch", result.best_epoch},
                    {"history", history},
                    {"checkpoint", o.output},
                    {"checkpoint_digest", InputDigest({o.output})},
                    {"config", config},
                    {"input_digest", InputDigest(ExistingPaths({o.pairs, o.resume_from}))}};
  if (!o.report.empty()) WriteJson(o.report, report);
  log.Info("done", {{"best_checkpoint", o.output}, {"best_epoch", result.best_epoch}});
  std::cout << "train: " << result.train_size << " train / " << result.val_size
            << " validation instances, " << result.history.size() << " epochs\n";
  for (const auto& e : result.history) {
    std::cout << "  epoch " << e.epoch << "  loss " << e.mean_loss << "  val recall@1 "
              << e.val_recall_at_1 << (e.epoch == result.best_epoch ? "  (best)" : "")
              << '\n';
  }
  std::cout << "best checkpoint (epoch " << result.best_epoch << ") -> " << o.output << '\n';
  return 0;
}

// ---------------------------------------------------------------------- index

struct IndexOptions {
  std::string corpus;
  std::string checkpoint;
  std::string embeddings;
  std::string output;
  std::size_t shards = 1;
  std::size_t workers = 1;
  std::string on_malformed = "skip";
};

json ToJson(const IndexOptions& o, const Global& g) {
  return {{"corpus", o.corpus},   {"checkpoint", o.checkpoint}, {"embeddings", o.embeddings},
          {"output", o.output},   {"shards", o.shards},         {"workers", o.workers},
          {"on-malformed", o.on_malformed}, {"seed", g.seed}};
}

int RunIndex(const IndexOptions& o, const Global& g, const Log& log) {
  log.Info("config", {{"config", ToJson(o, g)}});
  const Corpus corpus = ReadCorpusFile(o.corpus, ParseMalformed(o.on_malformed), log);
  const auto encoder = LoadEncoder(o.checkpoint, o.embeddings, Side::kCandidate, log);
  const auto start = std::chrono::steady_clock::now();
  const DenseIndex index = BuildDenseIndex(corpus, *encoder, o.shards, o.workers);
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  index.Save(fs::path(o.output));
  log.Info("done", {{"rows", index.size()},
                    {"dim", index.dim()},
                    {"shards", index.shards().size()},
                    {"seconds", seconds},
                    {"output", o.output}});
  std::cout << "index: " << index.size() << " rows x " << index.dim() << " dims in "
            << index.shards().size() << " shards -> " << o.output << '\n';
  return 0;
}

// -------------------------------------------------------------------- rescale

struct RescaleOptions {
  std::string corpus;
  std::string index;
  std::string checkpoint;
  std::string embeddings;
  std::string output;
  std::string report;
  std::string trace;
  RescaleConfig rescale;
  std::size_t repeat_top_k = 1000;
  std::string on_malformed = "skip";
};

json ToJson(const RescaleOptions& o, const Global& g) {
  const auto& r = o.rescale;
  return {{"corpus", o.corpus},
          {"index", o.index},
          {"checkpoint", o.checkpoint},
          {"embeddings", o.embeddings},
          {"output", o.output},
          {"report", o.report},
          {"trace", o.trace},
          {"updates", r.updates},
          {"top-k", r.top_k},
          {"max-lcs", r.max_lcs},
          {"dialogue-weight", r.enable_dialogue_weight},
          {"corpus-weight", r.enable_corpus_weight},
          {"widen-on-exhaustion", r.widen_on_exhaustion},
          {"workers", r.workers},
          {"repeat-top-k", o.repeat_top_k},
          {"on-malformed", o.on_malformed},
          {"seed", g.seed}};
}

int RunRescale(RescaleOptions o, const Global& g, const Log& log) {
  o.rescale.seed = g.seed;
  o.rescale.Validate();
  if (o.repeat_top_k == 0) throw Error("repeat-top-k must be at least 1");
  const json config = ToJson(o, g);
  log.Info("config", {{"config", config}});

  const Corpus corpus = ReadCorpusFile(o.corpus, ParseMalformed(o.on_malformed), log);
  RequireInput(o.index);
  const DenseIndex index = DenseIndex::Load(fs::path(o.index));
  log.Info("index_loaded", {{"path", o.index}, {"rows", index.size()}, {"dim", index.dim()}});
  const auto encoder = LoadEncoder(o.checkpoint, o.embeddings, Side::kQuery, log);

  const auto start = std::chrono::steady_clock::now();
  auto result = RescaleCorpus(corpus, index, *encoder, o.rescale);
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (o.repeat_top_k != result.report.repeat_sampling_top_k) {
    result.report.repeat_sampling_top_k = o.repeat_top_k;
    result.report.repeat_sampling = ComputeRepeatSampling(result.counts, o.repeat_top_k);
  }
  SaveCorpus(result.corpus, fs::path(o.output));

  json report = ToJson(result.report);
  report["config"] = config;
  report["input_digest"] =
      InputDigest(ExistingPaths({o.corpus, o.index, o.checkpoint, o.embeddings}));
  if (!o.report.empty()) WriteJson(o.report, report);
  if (!o.trace.empty()) {
    auto out = OpenOutput(o.trace);
    for (const auto& t : result.traces) out << ToJson(t).dump() << '\n';
  }
  log.Info("done", {{"seconds", seconds}, {"report", report}});

  const auto& r = result.report;
  std::size_t early = 0;
  for (const auto& [step, n] : r.early_stops_by_step) early += n;
  std::cout << "rescale (" << r.mode << "): " << r.sessions << " sessions, avg turns "
            << r.avg_turns_before << " -> " << r.avg_turns_after << " ("
            << (r.avg_turns_before > 0 ? r.avg_turns_after / r.avg_turns_before : 0.0)
            << "x), " << early << " early stops, overlap " << r.overlap_score
            << ", repeat sampling " << r.repeat_sampling.mean << " +/- "
            << r.repeat_sampling.std << " -> " << o.output << '\n';
  return 0;
}

// ------------------------------------------------------------- eval-retriever

struct EvalOptions {
  std::string corpus;
  std::string checkpoint;
  std::string output;
  std::vector<std::size_t> ks{1, 5, 10};
  bool bm25 = true;
  std::size_t shards = 1;
  std::size_t workers = 1;
  std::string on_malformed = "skip";
};

json ToJson(const EvalOptions& o, const Global& g) {
  return {{"corpus", o.corpus}, {"checkpoint", o.checkpoint}, {"output", o.output},
          {"ks", o.ks},         {"bm25", o.bm25},             {"shards", o.shards},
          {"workers", o.workers}, {"on-malformed", o.on_malformed}, {"seed", g.seed}};
}

int RunEval(const EvalOptions& o, const Global& g, const Log& log) {
  const json config = ToJson(o, g);
  log.Info("config", {{"config", config}});
  if (o.ks.empty()) throw Error("ks must not be empty");
  for (std::size_t k : o.ks) {
    if (k == 0) throw Error("every k must be at least 1");
  }
  const Corpus corpus = ReadCorpusFile(o.corpus, ParseMalformed(o.on_malformed), log);
  const auto eval = BuildRecallEvaluation(corpus, g.seed);
  if (eval.queries.empty()) throw Error("no session with 4 or more turns to evaluate on");

  std::vector<std::unique_ptr<Retriever>> retrievers;
  std::shared_ptr<const DualEncoder<float>> dual;
  if (o.bm25) retrievers.push_back(std::make_unique<Bm25Retriever>(Bm25Retriever::FromSessions(eval.pool)));
  if (!o.checkpoint.empty()) {
    RequireInput(o.checkpoint);
    dual = std::make_shared<const DualEncoder<float>>(LoadCheckpoint(fs::path(o.checkpoint)));
    retrievers.push_back(std::make_unique<DenseRetriever>(
        std::make_shared<LinearSessionEncoder>(dual, Side::kQuery),
        std::make_shared<LinearSessionEncoder>(dual, Side::kCandidate), "dense"));
  }
  if (retrievers.empty()) throw Error("nothing to evaluate: enable bm25 or give a checkpoint");

  std::map<Aspect, std::vector<PerturbationPair>> pairs;
  for (Aspect a : kAllAspects) {
    auto set = MakePerturbationSet(corpus, a, g.seed);
    log.Info("perturbations", {{"aspect", ToString(a)},
                               {"pairs", set.pairs.size()},
                               {"skipped_short", set.skipped_short},
                               {"skipped_no_donor", set.skipped_no_donor}});
    pairs[a] = std::move(set.pairs);
  }

  json value{{"queries", eval.queries.size()}, {"pool", eval.pool.size()}};
  json baseline = json::object();
  for (std::size_t k : o.ks) {
    baseline[std::to_string(k)] =
        std::min(1.0, static_cast<double>(k) / static_cast<double>(eval.pool.size()));
  }
  value["recall_random_baseline"] = baseline;
  json table = json::object();
  for (const auto& r : retrievers) {
    const auto recall = RecallAtK(*r, eval.queries, eval.pool, o.ks);
    json rec = json::object();
    for (const auto& [k, v] : recall.recall) rec[std::to_string(k)] = v;
    json row{{"recall", rec}};
    for (Aspect a : kAllAspects) {
      row["accuracy"][std::string(ToString(a))] =
          pairs[a].empty() ? json(nullptr) : json(DiscriminationAccuracy(*r, pairs[a]));
    }
    table[r->name()] = row;
    log.Info("retriever", {{"name", r->name()}, {"result", row}});
  }
  value["retrievers"] = table;

  if (dual) {
    // Throughput of exact top-k search over the encoded pool.
    const LinearSessionEncoder cand(dual, Side::kCandidate);
    Corpus pool;
    for (const auto& s : eval.pool) pool.Add(s);
    const DenseIndex index = BuildDenseIndex(pool, cand, o.shards, o.workers);
    std::vector<Vector<float>> queries;
    for (const auto& q : eval.queries) queries.push_back(dual->Encode(Side::kQuery, q.query));
    BatchSearchStats stats;
    const std::size_t k = *std::max_element(o.ks.begin(), o.ks.end());
    SearchBatch(index, queries, k, {}, o.workers, &stats);
    value["search"] = {{"queries", stats.queries},
                       {"seconds", stats.seconds},
                       {"queries_per_second", stats.queries_per_second}};
    log.Info("search_throughput", value["search"]);
  }

  const json doc{{"metric", "eval-retriever"},
                 {"value", value},
                 {"config", config},
                 {"input_digest", InputDigest(ExistingPaths({o.corpus, o.checkpoint}))}};
  if (!o.output.empty()) WriteJson(o.output, doc);
  log.Info("done", {{"output", o.output}});

  std::cout << "eval-retriever: " << eval.queries.size() << " queries, pool "
            << eval.pool.size() << "\n\n";
  std::cout << std::left << std::setw(12) << "retriever" << std::setw(14) << "Irrelevance"
            << std::setw(18) << "Local Relevance" << "Discourse Incoherence\n";
  std::cout << std::fixed << std::setprecision(4);
  for (const auto& r : retrievers) {
    std::cout << std::setw(12) << r->name();
    const auto& acc = table[r->name()]["accuracy"];
    int width = 14;
    for (Aspect a : kAllAspects) {
      const auto& v = acc[std::string(ToString(a))];
      std::ostringstream cell;
      if (v.is_null()) {
        cell << "n/a";
      } else {
        cell << std::fixed << std::setprecision(4) << v.get<double>();
      }
      std::cout << std::setw(width) << cell.str();
      width = a == Aspect::kIrrelevance ? 18 : 0;
    }
    std::cout << '\n';
  }
  std::cout << '\n' << std::setw(12) << "recall@k";
  for (std::size_t k : o.ks) std::cout << std::setw(10) << ("k=" + std::to_string(k));
  std::cout << '\n';
  for (const auto& r : retrievers) {
    std::cout << std::setw(12) << r->name();
    for (std::size_t k : o.ks) {
      std::cout << std::setw(10) << table[r->name()]["recall"][std::to_string(k)].get<double>();
    }
    std::cout << '\n';
  }
  std::cout << std::setw(12) << "random";
  for (std::size_t k : o.ks) std::cout << std::setw(10) << baseline[std::to_string(k)].get<double>();
  std::cout << '\n';
  if (value.contains("search")) {
    std::cout << "\nsearch throughput: " << std::setprecision(1)
              << value["search"]["queries_per_second"].get<double>() << " queries/s\n";
  }
  return 0;
}

// ---------------------------------------------------------------------- stats

struct StatsOptions {
  std::string corpus;
  std::string baseline;
  std::string output;
  std::vector<std::size_t> ngrams{1, 2};
  std::size_t repeat_top_k = 1000;
  std::string on_malformed = "skip";
};

json ToJson(const StatsOptions& o, const Global& g) {
  return {{"corpus", o.corpus},   {"baseline", o.baseline},         {"output", o.output},
          {"ngrams", o.ngrams},   {"repeat-top-k", o.repeat_top_k}, {"on-malformed", o.on_malformed},
          {"seed", g.seed}};
}

int RunStats(const StatsOptions& o, const Global& g, const Log& log) {
  const json config = ToJson(o, g);
  log.Info("config", {{"config", config}});
  if (o.repeat_top_k == 0) throw Error("repeat-top-k must be at least 1");
  const auto mode = ParseMalformed(o.on_malformed);
  const Corpus corpus = ReadCorpusFile(o.corpus, mode, log);

  const auto stats = ComputeCorpusStats(corpus);
  const auto overlap = OverlapScore(corpus);
  std::vector<std::string> texts;
  for (const auto& s : corpus) {
    for (const auto& u : s.utterances) texts.push_back(u.text());
  }
  json distinct = json::object();
  for (std::size_t n : o.ngrams) distinct[std::to_string(n)] = DistinctN(texts, n);

  json value{{"sessions", stats.num_sessions},
             {"avg_turns", stats.avg_turns},
             {"avg_utterance_tokens", stats.avg_utt_tokens},
             {"overlap_score", overlap.value},
             {"overlap_scored_utterances", overlap.scored_utterances},
             {"overlap_no_scored_utterances", overlap.no_scored_utterances},
             {"distinct", distinct}};

  // Sampled counts are recoverable from provenance: every id after the first
  // in source_ids was sampled once.
  std::unordered_map<std::string, std::uint64_t> counts;
  bool has_provenance = false;
  for (const auto& s : corpus) {
    if (s.source_ids.empty()) continue;
    has_provenance = true;
    for (std::size_t i = 1; i < s.source_ids.size(); ++i) ++counts[s.source_ids[i]];
  }
  if (has_provenance) {
    const auto rs = ComputeRepeatSampling(counts, o.repeat_top_k);
    value["repeat_sampling"] = {{"top_k", o.repeat_top_k}, {"mean", rs.mean},
                                {"std", rs.std},           {"population", rs.population},
                                {"empty", rs.empty}};
  }
  if (!o.baseline.empty()) {
    const Corpus base = ReadCorpusFile(o.baseline, mode, log);
    const auto bs = ComputeCorpusStats(base);
    value["baseline"] = {{"sessions", bs.num_sessions},
                         {"avg_turns", bs.avg_turns},
                         {"turn_ratio", bs.avg_turns > 0 ? stats.avg_turns / bs.avg_turns : 0.0}};
  }
  const json doc{{"metric", "stats"},
                 {"value", value},
                 {"config", config},
                 {"input_digest", InputDigest(ExistingPaths({o.corpus, o.baseline}))}};
  if (!o.output.empty()) WriteJson(o.output, doc);
  log.Info("done", {{"value", value}});

  std::cout << "stats: " << stats.num_sessions << " sessions, avg turns " << stats.avg_turns
            << ", avg utterance tokens " << stats.avg_utt_tokens << ", overlap "
            << overlap.value;
  for (std::size_t n : o.ngrams) {
    std::cout << ", distinct-" << n << ' ' << distinct[std::to_string(n)].get<double>();
  }
  if (value.contains("baseline")) {
    std::cout << ", turn ratio vs baseline " << value["baseline"]["turn_ratio"].get<double>();
  }
  std::cout << '\n';
  return 0;
}

void AddMalformed(CLI::App* sub, std::string& target) {
  sub->add_option("--on-malformed", target, "skip or abort on a malformed corpus line")
      ->capture_default_str();
}

int Main(int argc, char** argv) {
  CLI::App app{"Rescale short-turn dialogue corpora into long-turn ones."};
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.set_config("--config", "", "TOML config file (default: $LONGTURN_CONFIG)")
      ->envname(kConfigEnv);
  app.require_subcommand(1);

  Global global;
  app.add_option("--seed", global.seed, "global seed")->capture_default_str();

  BuildPairsOptions bp;
  auto* build_pairs = app.add_subcommand("build-pairs", "make contrastive training pairs");
  build_pairs->add_option("--input", bp.input, "corpus JSONL")->required();
  build_pairs->add_option("--output", bp.output, "training pairs JSONL")->required();
  build_pairs->add_option("--report", bp.report, "report JSON");
  build_pairs->add_option("--n-easy", bp.n_easy)->capture_default_str();
  build_pairs->add_option("--n-hard", bp.n_hard)->capture_default_str();
  AddMalformed(build_pairs, bp.on_malformed);

  TrainOptions tr;
  auto* train = app.add_subcommand("train", "train the dual encoder");
  train->add_option("--pairs", tr.pairs, "training pairs JSONL")->required();
  train->add_option("--output", tr.output, "checkpoint path")->required();
  train->add_option("--report", tr.report, "training report JSON");
  train->add_option("--resume-from", tr.resume_from, "checkpoint to continue from");
  train->add_option("--hash-bits", tr.train.hash_bits)->capture_default_str();
  train->add_option("--dim", tr.train.dim)->capture_default_str();
  train->add_option("--epochs", tr.train.epochs)->capture_default_str();
  train->add_option("--batch-size", tr.train.batch_size)->capture_default_str();
  train->add_option("--lr", tr.train.lr)->capture_default_str();
  train->add_option("--optimizer", tr.optimizer, "sgd or adam")->capture_default_str();
  train->add_option("--momentum", tr.train.momentum)->capture_default_str();
  train->add_option("--adam-beta1", tr.train.adam_beta1)->capture_default_str();
  train->add_option("--adam-beta2", tr.train.adam_beta2)->capture_default_str();
  train->add_option("--adam-eps", tr.train.adam_eps)->capture_default_str();
  train->add_option("--init-scale", tr.train.init_scale)->capture_default_str();
  train->add_option("--clip-norm", tr.train.clip_norm)->capture_default_str();
  train->add_option("--val-fraction", tr.train.val_fraction)->capture_default_str();
  train->add_flag("--in-batch,!--no-in-batch", tr.train.use_in_batch,
                  "use other positives in the batch as negatives");

  IndexOptions ix;
  auto* index = app.add_subcommand("index", "encode a corpus into a dense index");
  index->add_option("--corpus", ix.corpus, "corpus JSONL")->required();
  index->add_option("--checkpoint", ix.checkpoint, "trained encoder");
  index->add_option("--embeddings", ix.embeddings, "precomputed embeddings JSONL");
  index->add_option("--output", ix.output, "index path")->required();
  index->add_option("--shards", ix.shards, "row partitions searched independently")->capture_default_str();
  index->add_option("--workers", ix.workers, "encoding threads")->capture_default_str();
  AddMalformed(index, ix.on_malformed);

  RescaleOptions rs;
  auto* rescale = app.add_subcommand("rescale", "build long-turn sessions");
  rescale->add_option("--corpus", rs.corpus, "corpus JSONL the index was built from")->required();
  rescale->add_option("--index", rs.index, "dense index")->required();
  rescale->add_option("--checkpoint", rs.checkpoint, "trained encoder (query side)");
  rescale->add_option("--embeddings", rs.embeddings, "precomputed embeddings JSONL");
  rescale->add_option("--output", rs.output, "output corpus JSONL")->required();
  rescale->add_option("--report", rs.report, "report JSON");
  rescale->add_option("--trace", rs.trace, "per-seed trace JSONL");
  rescale->add_option("--updates", rs.rescale.updates, "appends per seed session")->capture_default_str();
  rescale->add_option("--top-k", rs.rescale.top_k, "candidates retrieved per step")->capture_default_str();
  rescale->add_option("--max-lcs", rs.rescale.max_lcs, "longest token run a candidate may share with the dialogue")->capture_default_str();
  rescale->add_flag("--dialogue-weight,!--no-dialogue-weight", rs.rescale.enable_dialogue_weight,
                    "reject candidates that repeat the dialogue so far");
  rescale->add_flag("--corpus-weight,!--no-corpus-weight", rs.rescale.enable_corpus_weight,
                    "down-weight sessions by how often they were used");
  rescale->add_flag("--widen-on-exhaustion,!--no-widen-on-exhaustion",
                    rs.rescale.widen_on_exhaustion,
                    "retry with twice the candidates when all are rejected");
  rescale->add_option("--workers", rs.rescale.workers, "seeds processed concurrently")->capture_default_str();
  rescale->add_option("--repeat-top-k", rs.repeat_top_k, "most-used sessions in the repeat sampling summary")->capture_default_str();
  AddMalformed(rescale, rs.on_malformed);

  EvalOptions ev;
  auto* eval = app.add_subcommand("eval-retriever", "recall@k and perturbation accuracy");
  eval->add_option("--corpus", ev.corpus, "evaluation corpus JSONL")->required();
  eval->add_option("--checkpoint", ev.checkpoint, "trained encoder");
  eval->add_option("--output", ev.output, "metrics JSON");
  eval->add_option("--ks", ev.ks, "recall cutoffs")->capture_default_str();
  eval->add_flag("--bm25,!--no-bm25", ev.bm25, "also evaluate BM25");
  eval->add_option("--shards", ev.shards)->capture_default_str();
  eval->add_option("--workers", ev.workers, "search threads")->capture_default_str();
  AddMalformed(eval, ev.on_malformed);

  StatsOptions st;
  auto* stats = app.add_subcommand("stats", "corpus statistics");
  stats->add_option("--corpus", st.corpus, "corpus JSONL")->required();
  stats->add_option("--baseline", st.baseline, "corpus to compare average turns against");
  stats->add_option("--output", st.output, "metrics JSON");
  stats->add_option("--ngrams", st.ngrams, "distinct-n orders")->capture_default_str();
  stats->add_option("--repeat-top-k", st.repeat_top_k, "most-used sessions in the repeat sampling summary")->capture_default_str();
  AddMalformed(stats, st.on_malformed);

  std::string command = "longturn";
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    const auto subs = app.get_subcommands();
    if (!subs.empty()) command = subs.front()->get_name();
    Log(command).Write("error", "usage",
                       {{"error", e.what()}, {"kind", e.get_name()}, {"exit_code", 2}});
    return 2;
  }
  command = app.get_subcommands().front()->get_name();
  const Log log(command);
  try {
    if (build_pairs->parsed()) return RunBuildPairs(bp, global, log);
    if (train->parsed()) return RunTrain(tr, global, log);
    if (index->parsed()) return RunIndex(ix, global, log);
    if (rescale->parsed()) return RunRescale(rs, global, log);
    if (eval->parsed()) return RunEval(ev, global, log);
    if (stats->parsed()) return RunStats(st, global, log);
  } catch (const std::exception& e) {
    log.Write("error", "failed", {{"error", e.what()}, {"exit_code", 1}});
    return 1;
  }
  return 1;
}

}  // namespace
}  // namespace longturn::cli

int main(int argc, char** argv) { return longturn::cli::Main(argc, argv); }
