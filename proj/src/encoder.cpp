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

#include "longturn/encoder.hpp"

#include <fstream>
#include <istream>
#include <map>
#include <ostream>

#include "longturn/binary_io.hpp"

namespace longturn {
namespace {

constexpr char kCheckpointMagic[9] = "LTDUALEN";
constexpr std::uint32_t kCheckpointVersion = 1;

std::uint32_t Bucket(std::string_view key, std::uint32_t mask) {
  return static_cast<std::uint32_t>(Hash64(key, kFeatureHashSeed)) & mask;
}

template <typename Scalar>
struct OptimizerState {
  ParamMatrix<Scalar> first;
  ParamMatrix<Scalar> second;
};

void ApplyUpdate(ParamMatrix<float>& w, const SparseRowGradient<float>& g,
                 OptimizerState<float>& state, const TrainConfig& config,
                 long step) {
  if (config.optimizer == Optimizer::kSgdMomentum) {
    state.first *= static_cast<float>(config.momentum);
    for (std::size_t i = 0; i < g.rows.size(); ++i) {
      state.first.row(g.rows[i]) += g.values.row(static_cast<Eigen::Index>(i));
    }
    w.noalias() -= static_cast<float>(config.lr) * state.first;
    return;
  }
  const auto b1 = static_cast<float>(config.adam_beta1);
  const auto b2 = static_cast<float>(config.adam_beta2);
  state.first *= b1;
  state.second *= b2;
  for (std::size_t i = 0; i < g.rows.size(); ++i) {
    const auto gi = g.values.row(static_cast<Eigen::Index>(i));
    state.first.row(g.rows[i]) += (1.0f - b1) * gi;
    state.second.row(g.rows[i]) += (1.0f - b2) * gi.cwiseAbs2();
  }
  const double c1 = 1.0 - std::pow(config.adam_beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(config.adam_beta2, static_cast<double>(step));
  const auto step_size = static_cast<float>(config.lr / c1);
  const auto eps = static_cast<float>(config.adam_eps);
  const auto inv_c2 = static_cast<float>(1.0 / c2);
  w.array() -= step_size * state.first.array() /
               ((state.second.array() * inv_c2).sqrt() + eps);
}

}  // namespace

FeatureVector FeaturizeTokens(std::span<const std::string> stream,
                              int hash_bits) {
  if (hash_bits < kMinHashBits || hash_bits > kMaxHashBits) {
    throw Error("hash bits must be in [8, 24], got " + std::to_string(hash_bits));
  }
  const std::uint32_t mask = (std::uint32_t{1} << hash_bits) - 1;
  std::map<std::uint32_t, float> counts;
  std::string key;
  for (std::size_t i = 0; i < stream.size(); ++i) {
    if (stream[i] != kSeparatorToken) {
      key = "u\x1f";
      key += stream[i];
      counts[Bucket(key, mask)] += 1.0f;
    }
    if (i + 1 < stream.size()) {
      key = "b\x1f";
      key += stream[i];
      key += '\x1f';
      key += stream[i + 1];
      counts[Bucket(key, mask)] += 1.0f;
    }
  }
  FeatureVector x;
  x.hash_bits = hash_bits;
  x.buckets.reserve(counts.size());
  x.counts.reserve(counts.size());
  for (const auto& [b, c] : counts) {
    x.buckets.push_back(b);
    x.counts.push_back(c);
  }
  return x;
}

FeatureVector Featurize(const Session& s, int hash_bits) {
  Tokens stream = SessionTokensWithSeparators(s);
  const bool has_word = std::any_of(stream.begin(), stream.end(), [](const auto& t) {
    return t != kSeparatorToken;
  });
  if (!has_word) {
    // Punctuation-only text: fall back to whole utterances as tokens.
    stream.clear();
    for (std::size_t i = 0; i < s.utterances.size(); ++i) {
      if (i > 0) stream.emplace_back(kSeparatorToken);
      stream.push_back(s.utterances[i].text());
    }
  }
  return FeaturizeTokens(stream, hash_bits);
}

void SaveCheckpoint(const DualEncoder<float>& encoder, std::ostream& out) {
  io::WriteMagic(out, kCheckpointMagic);
  io::WriteLE<std::uint32_t>(out, kCheckpointVersion);
  io::WriteLE<std::uint32_t>(out, static_cast<std::uint32_t>(encoder.hash_bits()));
  io::WriteLE<std::uint32_t>(out, static_cast<std::uint32_t>(encoder.dim()));
  for (Side side : {Side::kQuery, Side::kCandidate}) {
    const auto& w = encoder.weights(side);
    for (Eigen::Index i = 0; i < w.size(); ++i) io::WriteLE<float>(out, w.data()[i]);
  }
}

void SaveCheckpoint(const DualEncoder<float>& encoder,
                    const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write checkpoint '" + path.string() + "'");
  SaveCheckpoint(encoder, out);
}

DualEncoder<float> LoadCheckpoint(std::istream& in) {
  io::ExpectMagic(in, kCheckpointMagic, "encoder checkpoint");
  const auto version = io::ReadLE<std::uint32_t>(in);
  if (version != kCheckpointVersion) {
    throw Error("unsupported checkpoint version " + std::to_string(version));
  }
  const auto hash_bits = static_cast<int>(io::ReadLE<std::uint32_t>(in));
  const auto dim = static_cast<int>(io::ReadLE<std::uint32_t>(in));
  DualEncoder<float> encoder(hash_bits, dim);
  for (Side side : {Side::kQuery, Side::kCandidate}) {
    auto& w = encoder.weights(side);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = io::ReadLE<float>(in);
  }
  return encoder;
}

DualEncoder<float> LoadCheckpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint '" + path.string() + "'");
  return LoadCheckpoint(in);
}

std::vector<FeaturizedInstance> FeaturizeInstances(
    std::span<const TrainingInstance> instances, int hash_bits) {
  std::vector<FeaturizedInstance> out;
  out.reserve(instances.size());
  for (const auto& inst : instances) {
    FeaturizedInstance f;
    f.query = Featurize(inst.query, hash_bits);
    f.positive = Featurize(inst.positive, hash_bits);
    for (const auto& n : inst.negatives) {
      f.negatives.push_back(Featurize(n.segment, hash_bits));
    }
    out.push_back(std::move(f));
  }
  return out;
}

namespace detail {

BatchLayout LayoutBatch(std::span<const FeaturizedInstance> batch,
                        bool use_in_batch) {
  BatchLayout layout;
  const std::size_t b = batch.size();
  for (const auto& inst : batch) layout.candidates.push_back(&inst.positive);
  std::vector<std::size_t> neg_begin(b + 1, b);
  for (std::size_t i = 0; i < b; ++i) {
    neg_begin[i] = layout.candidates.size();
    for (const auto& n : batch[i].negatives) layout.candidates.push_back(&n);
  }
  neg_begin[b] = layout.candidates.size();

  layout.per_query.resize(b);
  for (std::size_t i = 0; i < b; ++i) {
    auto& list = layout.per_query[i];
    list.push_back(i);
    if (use_in_batch) {
      for (std::size_t j = 0; j < b; ++j) {
        if (j != i) list.push_back(j);
      }
      for (std::size_t k = b; k < layout.candidates.size(); ++k) list.push_back(k);
    } else {
      for (std::size_t k = neg_begin[i]; k < neg_begin[i + 1]; ++k) {
        list.push_back(k);
      }
    }
  }
  return layout;
}

}  // namespace detail

double TopOneRecall(const DualEncoder<float>& encoder,
                    std::span<const FeaturizedInstance> instances) {
  if (instances.empty()) return 0.0;
  std::vector<Vector<float>> c;
  c.reserve(instances.size());
  for (const auto& inst : instances) {
    c.push_back(encoder.Encode(Side::kCandidate, inst.positive));
  }
  std::size_t hits = 0;
  for (std::size_t i = 0; i < instances.size(); ++i) {
    const Vector<float> q = encoder.Encode(Side::kQuery, instances[i].query);
    const float own = q.dot(c[i]);
    bool top = true;
    for (std::size_t j = 0; j < c.size() && top; ++j) {
      if (j == i) continue;
      const float s = q.dot(c[j]);
      if (s > own || (s == own && j < i)) top = false;
    }
    hits += top ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(instances.size());
}

TrainResult Train(std::span<const TrainingInstance> instances,
                  const TrainConfig& config, const DualEncoder<float>* init,
                  const EpochCallback& on_epoch) {
  if (instances.empty()) throw Error("cannot train on an empty instance list");
  if (config.batch_size == 0) throw Error("batch size must be positive");
  if (config.epochs < 1) throw Error("epochs must be at least 1");

  const int hash_bits = init ? init->hash_bits() : config.hash_bits;
  const auto features = FeaturizeInstances(instances, hash_bits);

  Rng rng(config.seed);
  std::vector<std::size_t> order(features.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.Shuffle(order);

  std::size_t val_count = 0;
  if (features.size() >= 2 && config.val_fraction > 0.0) {
    val_count = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(config.val_fraction *
                                                 static_cast<double>(features.size()))));
    val_count = std::min(val_count, features.size() - 1);
  }
  std::vector<std::size_t> train_idx(order.begin(),
                                     order.end() - static_cast<std::ptrdiff_t>(val_count));
  std::vector<FeaturizedInstance> val;
  for (std::size_t i = order.size() - val_count; i < order.size(); ++i) {
    val.push_back(features[order[i]]);
  }
  if (val.empty()) {
    for (std::size_t i : train_idx) val.push_back(features[i]);
  }

  TrainResult result{init ? *init
                          : DualEncoder<float>::Random(
                                hash_bits, config.dim,
                                DeriveSeed(config.seed, "init"), config.init_scale),
                     {}, 0, train_idx.size(), val_count};
  DualEncoder<float> current = result.encoder;

  OptimizerState<float> q_state, c_state;
  for (auto* s : {&q_state, &c_state}) {
    s->first = ParamMatrix<float>::Zero(current.input_dim(), current.dim());
    if (config.optimizer == Optimizer::kAdam) s->second = s->first;
  }

  double best_recall = -1.0;
  long step = 0;
  std::vector<FeaturizedInstance> batch;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    rng.Shuffle(train_idx);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < train_idx.size(); start += config.batch_size) {
      const std::size_t end = std::min(train_idx.size(), start + config.batch_size);
      batch.clear();
      for (std::size_t i = start; i < end; ++i) batch.push_back(features[train_idx[i]]);
      auto grads = LossGradients<float>(current, batch, config.use_in_batch);
      if (config.clip_norm > 0.0) {
        const double norm = std::sqrt(
            static_cast<double>(grads.query.values.squaredNorm()) +
            static_cast<double>(grads.candidate.values.squaredNorm()));
        if (norm > config.clip_norm) {
          const auto scale = static_cast<float>(config.clip_norm / norm);
          grads.query.values *= scale;
          grads.candidate.values *= scale;
        }
      }
      ++step;
      ApplyUpdate(current.weights(Side::kQuery), grads.query, q_state, config, step);
      ApplyUpdate(current.weights(Side::kCandidate), grads.candidate, c_state,
                  config, step);
      loss_sum += grads.loss;
      ++batches;
    }
    EpochStats stats;
    stats.epoch = epoch;
    stats.mean_loss = batches ? loss_sum / static_cast<double>(batches) : 0.0;
    stats.val_recall_at_1 = TopOneRecall(current, val);
    result.history.push_back(stats);
    if (stats.val_recall_at_1 > best_recall) {
      best_recall = stats.val_recall_at_1;
      result.best_epoch = epoch;
      result.encoder = current;
    }
    if (on_epoch) on_epoch(stats);
  }
  return result;
}

void EmbeddingTable::Insert(std::string id, Vector<float> v) {
  if (v.size() == 0) throw Error("embedding for '" + id + "' is empty");
  if (table_.empty()) {
    dim_ = static_cast<int>(v.size());
  } else if (v.size() != dim_) {
    throw Error("embedding for '" + id + "' has dimension " +
                std::to_string(v.size()) + ", expected " + std::to_string(dim_));
  }
  if (!table_.emplace(id, std::move(v)).second) {
    throw Error("duplicate embedding id '" + id + "'");
  }
}

const Vector<float>& EmbeddingTable::Lookup(const std::string& id) const {
  auto it = table_.find(id);
  if (it == table_.end()) throw Error("no embedding for session id '" + id + "'");
  return it->second;
}

EmbeddingTable ReadEmbeddings(std::istream& in) {
  EmbeddingTable table;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      const auto values = j.at("vector").get<std::vector<float>>();
      table.Insert(j.at("id").get<std::string>(),
                   Eigen::Map<const Vector<float>>(values.data(),
                                                   static_cast<Eigen::Index>(values.size())));
    } catch (const std::exception& e) {
      throw Error("embeddings line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return table;
}

EmbeddingTable LoadEmbeddings(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open embeddings file '" + path.string() + "'");
  return ReadEmbeddings(in);
}

}  // namespace longturn
