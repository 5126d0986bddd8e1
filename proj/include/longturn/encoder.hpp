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

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

#include "longturn/common.hpp"
#include "longturn/corpus.hpp"
#include "longturn/pairgen.hpp"

namespace longturn {

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

// Parameter matrices are input_dim x dim and row-major, so the row for one
// hashed feature is contiguous.
template <typename Scalar>
using ParamMatrix =
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr int kMinHashBits = 8;
inline constexpr int kMaxHashBits = 24;
inline constexpr int kDefaultHashBits = 18;
inline constexpr int kDefaultDim = 128;
inline constexpr std::uint64_t kFeatureHashSeed = 0x6c6f6e677475726eULL;

// Sparse bucket counts over 2^hash_bits buckets, sorted by bucket.
struct FeatureVector {
  int hash_bits = kDefaultHashBits;
  std::vector<std::uint32_t> buckets;
  std::vector<float> counts;

  std::size_t nnz() const { return buckets.size(); }
  bool operator==(const FeatureVector&) const = default;
};

// Hashed unigrams and bigrams of the session's token stream, with utterances
// joined by kSeparatorToken. The separator is not a unigram but it does take
// part in bigrams, so bigrams span utterance boundaries.
//
// Feature keys are "u\x1f<tok>" and "b\x1f<a>\x1f<b>"; the bucket is the low
// hash_bits of Hash64(key, kFeatureHashSeed).
FeatureVector Featurize(const Session& s, int hash_bits = kDefaultHashBits);
FeatureVector FeaturizeTokens(std::span<const std::string> stream,
                              int hash_bits);

// y = W^T x.
template <typename Scalar>
Vector<Scalar> Encode(const ParamMatrix<Scalar>& w, const FeatureVector& x) {
  if (w.rows() != (Eigen::Index{1} << x.hash_bits)) {
    throw Error("encoder input dimension " + std::to_string(w.rows()) +
                " does not match 2^" + std::to_string(x.hash_bits));
  }
  if (x.nnz() == 0) throw Error("cannot encode an empty feature vector");
  Vector<Scalar> y = Vector<Scalar>::Zero(w.cols());
  for (std::size_t i = 0; i < x.nnz(); ++i) {
    y.noalias() += static_cast<Scalar>(x.counts[i]) *
                   w.row(x.buckets[i]).transpose();
  }
  return y;
}

template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar Similarity(const Eigen::MatrixBase<DerivedA>& q,
                                     const Eigen::MatrixBase<DerivedB>& c) {
  if (q.size() != c.size()) {
    throw Error("similarity: dimension mismatch (" + std::to_string(q.size()) +
                " vs " + std::to_string(c.size()) + ")");
  }
  return q.dot(c);
}

// Softmax cross-entropy of the positive against the negatives, with its
// derivatives with respect to every similarity.
template <typename Scalar>
struct LossWithGrad {
  Scalar loss = 0;
  Scalar d_positive = 0;
  std::vector<Scalar> d_negatives;
};

template <typename Scalar>
LossWithGrad<Scalar> ContrastiveLossWithGrad(Scalar positive,
                                             std::span<const Scalar> negatives) {
  using std::exp;
  using std::isfinite;
  using std::log;
  using std::log1p;
  if (!isfinite(positive)) throw Error("contrastive loss: non-finite input");
  Scalar m = positive;
  for (Scalar s : negatives) {
    if (!isfinite(s)) throw Error("contrastive loss: non-finite input");
    m = std::max(m, s);
  }
  LossWithGrad<Scalar> out;
  out.d_negatives.resize(negatives.size());
  if (negatives.empty()) return out;

  Scalar neg_sum = 0;
  for (std::size_t i = 0; i < negatives.size(); ++i) {
    out.d_negatives[i] = exp(negatives[i] - m);
    neg_sum += out.d_negatives[i];
  }
  const Scalar pos_exp = exp(positive - m);
  const Scalar total = pos_exp + neg_sum;
  out.loss = (m == positive) ? log1p(neg_sum) : (m - positive) + log(total);
  for (auto& g : out.d_negatives) g /= total;
  // softmax_pos - 1, written to avoid cancellation when the positive dominates
  out.d_positive = -neg_sum / total;
  return out;
}

template <typename Scalar>
Scalar ContrastiveLoss(Scalar positive, std::span<const Scalar> negatives) {
  return ContrastiveLossWithGrad(positive, negatives).loss;
}

enum class Side { kQuery, kCandidate };

template <typename Scalar>
class DualEncoder {
 public:
  DualEncoder(int hash_bits = kDefaultHashBits, int dim = kDefaultDim)
      : hash_bits_(CheckHashBits(hash_bits)),
        query_(ParamMatrix<Scalar>::Zero(Eigen::Index{1} << hash_bits, dim)),
        candidate_(ParamMatrix<Scalar>::Zero(Eigen::Index{1} << hash_bits, dim)) {
    if (dim < 1) throw Error("encoder dimension must be positive");
  }

  // Independent N(0, scale^2) entries for both sides.
  static DualEncoder Random(int hash_bits, int dim, std::uint64_t seed,
                            double scale) {
    DualEncoder enc(hash_bits, dim);
    Rng rng(seed);
    for (auto* w : {&enc.query_, &enc.candidate_}) {
      for (Eigen::Index i = 0; i < w->size(); ++i) {
        w->data()[i] = static_cast<Scalar>(scale * rng.Normal());
      }
    }
    return enc;
  }

  int hash_bits() const { return hash_bits_; }
  int dim() const { return static_cast<int>(query_.cols()); }
  Eigen::Index input_dim() const { return query_.rows(); }

  ParamMatrix<Scalar>& weights(Side side) {
    return side == Side::kQuery ? query_ : candidate_;
  }
  const ParamMatrix<Scalar>& weights(Side side) const {
    return side == Side::kQuery ? query_ : candidate_;
  }

  Vector<Scalar> Encode(Side side, const FeatureVector& x) const {
    return longturn::Encode(weights(side), x);
  }
  Vector<Scalar> Encode(Side side, const Session& s) const {
    return Encode(side, Featurize(s, hash_bits_));
  }
  Scalar Score(const Session& query, const Session& candidate) const {
    return Encode(Side::kQuery, query).dot(Encode(Side::kCandidate, candidate));
  }

  template <typename Other>
  DualEncoder<Other> cast() const {
    DualEncoder<Other> out(hash_bits_, dim());
    out.weights(Side::kQuery) = query_.template cast<Other>();
    out.weights(Side::kCandidate) = candidate_.template cast<Other>();
    return out;
  }

  bool operator==(const DualEncoder& other) const {
    return hash_bits_ == other.hash_bits_ && query_ == other.query_ &&
           candidate_ == other.candidate_;
  }

 private:
  static int CheckHashBits(int h) {
    if (h < kMinHashBits || h > kMaxHashBits) {
      throw Error("hash bits must be in [8, 24], got " + std::to_string(h));
    }
    return h;
  }

  int hash_bits_;
  ParamMatrix<Scalar> query_;
  ParamMatrix<Scalar> candidate_;
};

// Checkpoint: magic, version, hash_bits, dim, then W_q and W_c as row-major
// little-endian float32.
void SaveCheckpoint(const DualEncoder<float>& encoder, std::ostream& out);
void SaveCheckpoint(const DualEncoder<float>& encoder,
                    const std::filesystem::path& path);
DualEncoder<float> LoadCheckpoint(std::istream& in);
DualEncoder<float> LoadCheckpoint(const std::filesystem::path& path);

// Training data with every segment featurized once.
struct FeaturizedInstance {
  FeatureVector query;
  FeatureVector positive;
  std::vector<FeatureVector> negatives;
};

std::vector<FeaturizedInstance> FeaturizeInstances(
    std::span<const TrainingInstance> instances, int hash_bits);

// Gradient restricted to the parameter rows a batch touches.
template <typename Scalar>
struct SparseRowGradient {
  std::vector<std::uint32_t> rows;  // sorted, unique
  ParamMatrix<Scalar> values;       // rows.size() x dim

  // Dense value at (row, col); zero for untouched rows.
  Scalar at(std::uint32_t row, Eigen::Index col) const {
    auto it = std::lower_bound(rows.begin(), rows.end(), row);
    if (it == rows.end() || *it != row) return Scalar{0};
    return values(it - rows.begin(), col);
  }
};

template <typename Scalar>
struct BatchGradients {
  Scalar loss = 0;  // mean over the batch
  SparseRowGradient<Scalar> query;
  SparseRowGradient<Scalar> candidate;
};

namespace detail {

// Candidate list layout for a batch: positives first (one per instance, in
// order), then every explicit negative in instance order.
struct BatchLayout {
  std::vector<const FeatureVector*> candidates;
  std::vector<std::vector<std::size_t>> per_query;  // index 0 is the positive
};

BatchLayout LayoutBatch(std::span<const FeaturizedInstance> batch,
                        bool use_in_batch);

template <typename Scalar>
SparseRowGradient<Scalar> ScatterRows(
    std::span<const FeatureVector* const> inputs,
    const std::vector<Vector<Scalar>>& output_grads, int dim) {
  SparseRowGradient<Scalar> g;
  for (const auto* x : inputs) {
    g.rows.insert(g.rows.end(), x->buckets.begin(), x->buckets.end());
  }
  std::sort(g.rows.begin(), g.rows.end());
  g.rows.erase(std::unique(g.rows.begin(), g.rows.end()), g.rows.end());
  g.values = ParamMatrix<Scalar>::Zero(static_cast<Eigen::Index>(g.rows.size()),
                                       dim);
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const FeatureVector& x = *inputs[i];
    for (std::size_t f = 0; f < x.nnz(); ++f) {
      const auto r = std::lower_bound(g.rows.begin(), g.rows.end(),
                                      x.buckets[f]) -
                     g.rows.begin();
      g.values.row(r) +=
          static_cast<Scalar>(x.counts[f]) * output_grads[i].transpose();
    }
  }
  return g;
}

}  // namespace detail

// Mean contrastive loss over the batch and its exact gradient with respect to
// both parameter matrices. With `use_in_batch`, query i is contrasted against
// its own positive, the other positives of the batch, and every explicit
// negative in the batch; otherwise against its own negatives only.
template <typename Scalar>
BatchGradients<Scalar> LossGradients(const DualEncoder<Scalar>& encoder,
                                     std::span<const FeaturizedInstance> batch,
                                     bool use_in_batch) {
  if (batch.empty()) throw Error("loss gradients need a non-empty batch");
  const auto layout = detail::LayoutBatch(batch, use_in_batch);
  const int dim = encoder.dim();
  const Scalar inv_batch = Scalar{1} / static_cast<Scalar>(batch.size());

  std::vector<Vector<Scalar>> q(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    q[i] = encoder.Encode(Side::kQuery, batch[i].query);
  }
  std::vector<Vector<Scalar>> c(layout.candidates.size());
  for (std::size_t k = 0; k < c.size(); ++k) {
    c[k] = encoder.Encode(Side::kCandidate, *layout.candidates[k]);
  }

  BatchGradients<Scalar> out;
  std::vector<Vector<Scalar>> dq(batch.size(), Vector<Scalar>::Zero(dim));
  std::vector<Vector<Scalar>> dc(c.size(), Vector<Scalar>::Zero(dim));
  std::vector<Scalar> negs;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& cand = layout.per_query[i];
    const Scalar pos = q[i].dot(c[cand[0]]);
    negs.clear();
    for (std::size_t j = 1; j < cand.size(); ++j) negs.push_back(q[i].dot(c[cand[j]]));
    const auto lg = ContrastiveLossWithGrad<Scalar>(pos, negs);
    out.loss += lg.loss * inv_batch;
    for (std::size_t j = 0; j < cand.size(); ++j) {
      const Scalar g =
          (j == 0 ? lg.d_positive : lg.d_negatives[j - 1]) * inv_batch;
      if (g == Scalar{0}) continue;
      dq[i].noalias() += g * c[cand[j]];
      dc[cand[j]].noalias() += g * q[i];
    }
  }

  std::vector<const FeatureVector*> query_inputs;
  for (const auto& inst : batch) query_inputs.push_back(&inst.query);
  out.query = detail::ScatterRows<Scalar>(query_inputs, dq, dim);
  out.candidate = detail::ScatterRows<Scalar>(layout.candidates, dc, dim);
  return out;
}

template <typename Scalar>
Scalar BatchLoss(const DualEncoder<Scalar>& encoder,
                 std::span<const FeaturizedInstance> batch, bool use_in_batch) {
  return LossGradients(encoder, batch, use_in_batch).loss;
}

enum class Optimizer { kSgdMomentum, kAdam };

struct TrainConfig {
  int hash_bits = kDefaultHashBits;
  int dim = kDefaultDim;
  int epochs = 5;
  std::size_t batch_size = 64;
  double lr = 0.05;
  Optimizer optimizer = Optimizer::kSgdMomentum;
  double momentum = 0.9;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double init_scale = 0.05;
  double clip_norm = 1.0;  // cap on the global gradient norm; 0 disables
  double val_fraction = 0.1;
  std::uint64_t seed = 0;
  bool use_in_batch = true;
};

struct EpochStats {
  int epoch = 0;
  double mean_loss = 0.0;
  double val_recall_at_1 = 0.0;
};

struct TrainResult {
  DualEncoder<float> encoder;  // best checkpoint by validation top-1 recall
  std::vector<EpochStats> history;
  int best_epoch = 0;
  std::size_t train_size = 0;
  std::size_t val_size = 0;
};

using EpochCallback = std::function<void(const EpochStats&)>;

// Deterministic given config.seed. `init`, when given, replaces the random
// initialization (resuming from a checkpoint). Throws Error on an empty
// instance list.
TrainResult Train(std::span<const TrainingInstance> instances,
                  const TrainConfig& config,
                  const DualEncoder<float>* init = nullptr,
                  const EpochCallback& on_epoch = {});

// Fraction of instances whose own positive ranks first among all positives
// of `instances` (ties by position).
double TopOneRecall(const DualEncoder<float>& encoder,
                    std::span<const FeaturizedInstance> instances);

// Anything that maps a session to a dense vector: one side of a trained
// DualEncoder, or a table of externally computed embeddings.
class SessionEncoder {
 public:
  virtual ~SessionEncoder() = default;
  virtual int dim() const = 0;
  virtual Vector<float> Encode(const Session& s) const = 0;
};

class LinearSessionEncoder final : public SessionEncoder {
 public:
  LinearSessionEncoder(std::shared_ptr<const DualEncoder<float>> encoder,
                       Side side)
      : encoder_(std::move(encoder)), side_(side) {}

  int dim() const override { return encoder_->dim(); }
  Vector<float> Encode(const Session& s) const override {
    return encoder_->Encode(side_, s);
  }

 private:
  std::shared_ptr<const DualEncoder<float>> encoder_;
  Side side_;
};

// id -> vector, all of one dimension. Encode() is a lookup by session id.
class EmbeddingTable final : public SessionEncoder {
 public:
  EmbeddingTable() = default;

  // Throws Error on a dimension mismatch or duplicate id.
  void Insert(std::string id, Vector<float> v);

  int dim() const override { return dim_; }
  std::size_t size() const { return table_.size(); }
  bool Contains(const std::string& id) const { return table_.count(id) > 0; }
  const Vector<float>& Lookup(const std::string& id) const;
  Vector<float> Encode(const Session& s) const override { return Lookup(s.id); }

 private:
  int dim_ = 0;
  std::unordered_map<std::string, Vector<float>> table_;
};

// Line-delimited JSON {id, vector}. Throws Error naming the line on
// inconsistent dimensions or malformed records.
EmbeddingTable ReadEmbeddings(std::istream& in);
EmbeddingTable LoadEmbeddings(const std::filesystem::path& path);

}  // namespace longturn
