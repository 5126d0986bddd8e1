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
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

#include "longturn/common.hpp"
#include "longturn/corpus.hpp"
#include "longturn/encoder.hpp"

namespace longturn {

struct ShardRange {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const { return end - begin; }
  bool operator==(const ShardRange&) const = default;
};

// Contiguous near-equal shards covering [0, n); the first n % num_shards
// shards get one extra row. Throws Error when num_shards is 0.
std::vector<ShardRange> PartitionRows(std::size_t n, std::size_t num_shards);

using RowMatrix = ParamMatrix<float>;

// Exact inner-product index over float32 rows.
class DenseIndex {
 public:
  DenseIndex() = default;
  DenseIndex(RowMatrix vectors, std::vector<std::string> ids,
             std::size_t num_shards);

  std::size_t size() const { return ids_.size(); }
  int dim() const { return static_cast<int>(vectors_.cols()); }
  const RowMatrix& vectors() const { return vectors_; }
  const std::vector<std::string>& ids() const { return ids_; }
  const std::vector<ShardRange>& shards() const { return shards_; }
  std::optional<std::size_t> Position(const std::string& id) const;

  // Same rows under a different shard count.
  DenseIndex Resharded(std::size_t num_shards) const;

  void Save(std::ostream& out) const;
  static DenseIndex Load(std::istream& in);
  void Save(const std::filesystem::path& path) const;
  static DenseIndex Load(const std::filesystem::path& path);

  bool operator==(const DenseIndex& other) const {
    return ids_ == other.ids_ && shards_ == other.shards_ &&
           vectors_ == other.vectors_;
  }

 private:
  RowMatrix vectors_;
  std::vector<std::string> ids_;
  std::vector<ShardRange> shards_;
  std::unordered_map<std::string, std::size_t> positions_;
};

// Row i is the encoding of corpus session i. Encoding failures abort with
// the session id in the message.
DenseIndex BuildDenseIndex(const Corpus& corpus, const SessionEncoder& encoder,
                           std::size_t num_shards, std::size_t workers = 1);

// Float32 inputs, float64 products accumulated left to right. The fixed
// order makes scores identical on every platform.
double InnerProduct(const float* row, const float* query, int dim);

// Scores are ranked on their value rounded to 1e-6, then by ascending row
// position, so near-equal floating-point scores tie deterministically.
std::int64_t RankKey(double score);
bool RanksBefore(const ScoredId& a, const ScoredId& b);

// Exact top-k over rows whose id is not in `exclude`. k > size() returns
// every remaining row. Throws Error on a dimension mismatch or k == 0.
std::vector<ScoredId> SearchTopK(const DenseIndex& index, const Vector<float>& query,
                                 std::size_t k, const IdSet& exclude = {});

struct BatchSearchStats {
  std::size_t queries = 0;
  double seconds = 0.0;
  double queries_per_second = 0.0;
};

// search_topk for every query. Each (query block, shard) pair is an
// independent task on a pool of `workers` threads; per-shard results are
// combined by a k-way heap merge. Results do not depend on the shard or
// worker count. `excludes` is empty or has one set per query.
std::vector<std::vector<ScoredId>> SearchBatch(
    const DenseIndex& index, std::span<const Vector<float>> queries,
    std::size_t k, std::span<const IdSet> excludes = {}, std::size_t workers = 1,
    BatchSearchStats* stats = nullptr);

}  // namespace longturn
