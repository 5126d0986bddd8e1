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

#include "longturn/dense_index.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <queue>

#include "longturn/binary_io.hpp"
#include "parallel.hpp"

namespace longturn {
namespace {

constexpr char kMagic[9] = "LTDENSIX";
constexpr std::uint32_t kVersion = 1;

// Top-k of one shard, best first.
std::vector<ScoredId> SearchShard(const DenseIndex& index, const ShardRange& shard,
                                  const Vector<float>& query, std::size_t k,
                                  const IdSet& exclude) {
  // Max-heap on "worse", so the top is the current weakest hit.
  const auto worse = [](const ScoredId& a, const ScoredId& b) {
    return RanksBefore(a, b);
  };
  std::vector<ScoredId> heap;
  heap.reserve(std::min(k, shard.size()) + 1);
  const int d = index.dim();
  const float* q = query.data();
  for (std::size_t r = shard.begin; r < shard.end; ++r) {
    const std::string& id = index.ids()[r];
    if (!exclude.empty() && exclude.count(id)) continue;
    ScoredId hit{std::string(), InnerProduct(index.vectors().row(r).data(), q, d), r};
    if (heap.size() < k) {
      hit.id = id;
      heap.push_back(std::move(hit));
      std::push_heap(heap.begin(), heap.end(), worse);
    } else if (RanksBefore(hit, heap.front())) {
      std::pop_heap(heap.begin(), heap.end(), worse);
      hit.id = id;
      heap.back() = std::move(hit);
      std::push_heap(heap.begin(), heap.end(), worse);
    }
  }
  std::sort_heap(heap.begin(), heap.end(), worse);
  return heap;
}

std::vector<ScoredId> MergeShards(std::vector<std::vector<ScoredId>>& lists,
                                  std::size_t k) {
  using Head = std::pair<std::size_t, std::size_t>;  // (list, offset)
  const auto later = [&](const Head& a, const Head& b) {
    return RanksBefore(lists[b.first][b.second], lists[a.first][a.second]);
  };
  std::priority_queue<Head, std::vector<Head>, decltype(later)> heads(later);
  for (std::size_t l = 0; l < lists.size(); ++l) {
    if (!lists[l].empty()) heads.push({l, 0});
  }
  std::vector<ScoredId> out;
  while (!heads.empty() && out.size() < k) {
    auto [l, off] = heads.top();
    heads.pop();
    out.push_back(std::move(lists[l][off]));
    if (off + 1 < lists[l].size()) heads.push({l, off + 1});
  }
  return out;
}

void CheckQuery(const DenseIndex& index, const Vector<float>& query, std::size_t k) {
  if (k == 0) throw Error("dense search requires k >= 1");
  if (query.size() != index.dim()) {
    throw Error("query dimension " + std::to_string(query.size()) +
                " does not match index dimension " + std::to_string(index.dim()));
  }
}

}  // namespace

std::vector<ShardRange> PartitionRows(std::size_t n, std::size_t num_shards) {
  if (num_shards == 0) throw Error("number of shards must be at least 1");
  std::vector<ShardRange> shards;
  const std::size_t base = n / num_shards;
  const std::size_t extra = n % num_shards;
  std::size_t begin = 0;
  for (std::size_t s = 0; s < num_shards; ++s) {
    const std::size_t len = base + (s < extra ? 1 : 0);
    shards.push_back({begin, begin + len});
    begin += len;
  }
  return shards;
}

DenseIndex::DenseIndex(RowMatrix vectors, std::vector<std::string> ids,
                       std::size_t num_shards)
    : vectors_(std::move(vectors)),
      ids_(std::move(ids)),
      shards_(PartitionRows(ids_.size(), num_shards)) {
  if (static_cast<std::size_t>(vectors_.rows()) != ids_.size()) {
    throw Error("dense index: row and id counts differ");
  }
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    if (!positions_.emplace(ids_[i], i).second) {
      throw Error("dense index: duplicate id '" + ids_[i] + "'");
    }
  }
}

std::optional<std::size_t> DenseIndex::Position(const std::string& id) const {
  auto it = positions_.find(id);
  if (it == positions_.end()) return std::nullopt;
  return it->second;
}

DenseIndex DenseIndex::Resharded(std::size_t num_shards) const {
  DenseIndex copy = *this;
  copy.shards_ = PartitionRows(size(), num_shards);
  return copy;
}

void DenseIndex::Save(std::ostream& out) const {
  io::WriteMagic(out, kMagic);
  io::WriteLE<std::uint32_t>(out, kVersion);
  io::WriteLE<std::uint64_t>(out, size());
  io::WriteLE<std::uint64_t>(out, static_cast<std::uint64_t>(vectors_.cols()));
  io::WriteLE<std::uint64_t>(out, shards_.size());
  for (const auto& s : shards_) {
    io::WriteLE<std::uint64_t>(out, s.begin);
    io::WriteLE<std::uint64_t>(out, s.end);
  }
  for (Eigen::Index i = 0; i < vectors_.size(); ++i) {
    io::WriteLE<float>(out, vectors_.data()[i]);
  }
  for (const auto& id : ids_) io::WriteString(out, id);
}

DenseIndex DenseIndex::Load(std::istream& in) {
  io::ExpectMagic(in, kMagic, "dense index");
  const auto version = io::ReadLE<std::uint32_t>(in);
  if (version != kVersion) {
    throw Error("unsupported dense index version " + std::to_string(version));
  }
  const auto n = io::ReadLE<std::uint64_t>(in);
  const auto d = io::ReadLE<std::uint64_t>(in);
  const auto num_shards = io::ReadLE<std::uint64_t>(in);
  if (num_shards == 0 || num_shards > n + 1) throw Error("corrupt shard table");
  std::vector<ShardRange> shards(num_shards);
  for (auto& s : shards) {
    s.begin = io::ReadLE<std::uint64_t>(in);
    s.end = io::ReadLE<std::uint64_t>(in);
  }
  RowMatrix vectors(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < vectors.size(); ++i) {
    vectors.data()[i] = io::ReadLE<float>(in);
  }
  std::vector<std::string> ids(n);
  for (auto& id : ids) id = io::ReadString(in);
  DenseIndex index(std::move(vectors), std::move(ids), num_shards);
  if (index.shards_ != shards) throw Error("dense index shard table is not a partition");
  return index;
}

void DenseIndex::Save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  Save(out);
}

DenseIndex DenseIndex::Load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  return Load(in);
}

DenseIndex BuildDenseIndex(const Corpus& corpus, const SessionEncoder& encoder,
                           std::size_t num_shards, std::size_t workers) {
  const int d = encoder.dim();
  RowMatrix vectors(static_cast<Eigen::Index>(corpus.size()), d);
  std::vector<std::string> ids;
  ids.reserve(corpus.size());
  for (const auto& s : corpus) ids.push_back(s.id);
  internal::ParallelFor(corpus.size(), workers, [&](std::size_t i) {
    const Session& s = corpus[i];
    Vector<float> v;
    try {
      v = encoder.Encode(s);
    } catch (const std::exception& e) {
      throw Error("failed to encode session '" + s.id + "': " + e.what());
    }
    if (v.size() != d) {
      throw Error("failed to encode session '" + s.id + "': dimension " +
                  std::to_string(v.size()) + ", expected " + std::to_string(d));
    }
    vectors.row(static_cast<Eigen::Index>(i)) = v.transpose();
  });
  return DenseIndex(std::move(vectors), std::move(ids), num_shards);
}

double InnerProduct(const float* row, const float* query, int dim) {
  double acc = 0.0;
  for (int i = 0; i < dim; ++i) {
    acc += static_cast<double>(row[i]) * static_cast<double>(query[i]);
  }
  return acc;
}

std::int64_t RankKey(double score) { return std::llround(score * 1e6); }

bool RanksBefore(const ScoredId& a, const ScoredId& b) {
  const auto ka = RankKey(a.score);
  const auto kb = RankKey(b.score);
  if (ka != kb) return ka > kb;
  return a.position < b.position;
}

std::vector<ScoredId> SearchTopK(const DenseIndex& index, const Vector<float>& query,
                                 std::size_t k, const IdSet& exclude) {
  CheckQuery(index, query, k);
  std::vector<std::vector<ScoredId>> lists;
  lists.reserve(index.shards().size());
  for (const auto& shard : index.shards()) {
    lists.push_back(SearchShard(index, shard, query, k, exclude));
  }
  return MergeShards(lists, k);
}

std::vector<std::vector<ScoredId>> SearchBatch(
    const DenseIndex& index, std::span<const Vector<float>> queries,
    std::size_t k, std::span<const IdSet> excludes, std::size_t workers,
    BatchSearchStats* stats) {
  const auto start = std::chrono::steady_clock::now();
  if (!excludes.empty() && excludes.size() != queries.size()) {
    throw Error("SearchBatch: one exclusion set per query required");
  }
  for (const auto& q : queries) CheckQuery(index, q, k);

  static const IdSet kNone;
  const std::size_t num_shards = index.shards().size();
  std::vector<std::vector<std::vector<ScoredId>>> partial(
      queries.size(), std::vector<std::vector<ScoredId>>(num_shards));
  // Task t covers shard t % num_shards for a block of queries, so a worker
  // streams one shard's rows against several queries.
  constexpr std::size_t kQueryBlock = 16;
  const std::size_t blocks = (queries.size() + kQueryBlock - 1) / kQueryBlock;
  internal::ParallelFor(blocks * num_shards, workers, [&](std::size_t t) {
    const std::size_t shard = t % num_shards;
    const std::size_t block = t / num_shards;
    const std::size_t end = std::min(queries.size(), (block + 1) * kQueryBlock);
    for (std::size_t q = block * kQueryBlock; q < end; ++q) {
      partial[q][shard] = SearchShard(index, index.shards()[shard], queries[q], k,
                                      excludes.empty() ? kNone : excludes[q]);
    }
  });
  std::vector<std::vector<ScoredId>> results(queries.size());
  for (std::size_t q = 0; q < queries.size(); ++q) {
    results[q] = MergeShards(partial[q], k);
  }
  if (stats) {
    stats->queries = queries.size();
    stats->seconds = std::chrono::duration<double>(
                         std::chrono::steady_clock::now() - start)
                         .count();
    stats->queries_per_second =
        stats->seconds > 0 ? static_cast<double>(queries.size()) / stats->seconds
                           : 0.0;
  }
  return results;
}

}  // namespace longturn
