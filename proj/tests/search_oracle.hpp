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
#include <vector>

#include "longturn/dense_index.hpp"

namespace longturn::testing {

// Scores every row, drops excluded ids, stable-sorts by the score rounded to
// 1e-6 and truncates.
inline std::vector<ScoredId> BruteForceTopK(const RowMatrix& rows,
                                            const std::vector<std::string>& ids,
                                            const Vector<float>& q, std::size_t k,
                                            const IdSet& exclude) {
  std::vector<ScoredId> all;
  for (Eigen::Index r = 0; r < rows.rows(); ++r) {
    const auto& id = ids[static_cast<std::size_t>(r)];
    if (exclude.count(id)) continue;
    double s = 0.0;
    for (Eigen::Index j = 0; j < rows.cols(); ++j) {
      s += static_cast<double>(rows(r, j)) * static_cast<double>(q[j]);
    }
    all.push_back({id, s, static_cast<std::size_t>(r)});
  }
  std::stable_sort(all.begin(), all.end(), [](const ScoredId& a, const ScoredId& b) {
    return std::llround(a.score * 1e6) > std::llround(b.score * 1e6);
  });
  if (all.size() > k) all.resize(k);
  return all;
}

struct SearchInstance {
  RowMatrix rows;
  std::vector<std::string> ids;
  std::vector<Vector<float>> queries;
  std::vector<IdSet> excludes;
  std::size_t k = 1;
};

// Random rows with a share of exact duplicates and coarse values so that
// ties are common.
inline SearchInstance RandomSearchInstance(Rng& rng, std::size_t max_n, int max_d) {
  SearchInstance inst;
  const std::size_t n = 1 + rng.UniformIndex(max_n);
  const int d = 1 + static_cast<int>(rng.UniformIndex(static_cast<std::uint64_t>(max_d)));
  const bool coarse = rng.Uniform01() < 0.5;
  inst.rows.resize(static_cast<Eigen::Index>(n), d);
  for (Eigen::Index r = 0; r < inst.rows.rows(); ++r) {
    if (r > 0 && rng.Uniform01() < 0.1) {
      inst.rows.row(r) = inst.rows.row(static_cast<Eigen::Index>(rng.UniformIndex(r)));
      continue;
    }
    for (int j = 0; j < d; ++j) {
      inst.rows(r, j) = coarse ? static_cast<float>(rng.UniformInt(-2, 2))
                               : static_cast<float>(rng.Normal());
    }
  }
  for (std::size_t i = 0; i < n; ++i) inst.ids.push_back("r" + std::to_string(i));
  const std::size_t nq = 1 + rng.UniformIndex(4);
  for (std::size_t i = 0; i < nq; ++i) {
    Vector<float> q(d);
    for (int j = 0; j < d; ++j) {
      q[j] = coarse ? static_cast<float>(rng.UniformInt(-2, 2))
                    : static_cast<float>(rng.Normal());
    }
    inst.queries.push_back(q);
    IdSet ex;
    const std::size_t n_ex = rng.UniformIndex(std::min<std::size_t>(n, 20) + 1);
    for (std::size_t e = 0; e < n_ex; ++e) ex.insert(inst.ids[rng.UniformIndex(n)]);
    inst.excludes.push_back(std::move(ex));
  }
  inst.k = 1 + rng.UniformIndex(std::min<std::size_t>(n + 5, 64));
  return inst;
}

}  // namespace longturn::testing
