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

#include <cmath>
#include <map>
#include <sstream>

#include "gradient_check.hpp"
#include "longturn/encoder.hpp"
#include "longturn/pairgen.hpp"
#include "synthetic.hpp"

using namespace longturn;

namespace {

// Bucket counts computed straight from the key format.
std::map<std::uint32_t, float> HashedCounts(const Tokens& stream, int h) {
  const std::uint32_t mask = (1u << h) - 1;
  std::map<std::uint32_t, float> counts;
  for (std::size_t i = 0; i < stream.size(); ++i) {
    if (stream[i] != kSeparatorToken) {
      counts[static_cast<std::uint32_t>(Hash64("u\x1f" + stream[i], kFeatureHashSeed)) & mask] += 1;
    }
    if (i + 1 < stream.size()) {
      const std::string key = "b\x1f" + stream[i] + "\x1f" + stream[i + 1];
      counts[static_cast<std::uint32_t>(Hash64(key, kFeatureHashSeed)) & mask] += 1;
    }
  }
  return counts;
}

std::map<std::uint32_t, float> AsMap(const FeatureVector& x) {
  std::map<std::uint32_t, float> m;
  for (std::size_t i = 0; i < x.nnz(); ++i) m[x.buckets[i]] = x.counts[i];
  return m;
}

}  // namespace

TEST_CASE("featurize") {
  const Session ab = MakeSession("x", {"hello world", "good bye"});
  const Session ba = MakeSession("y", {"good bye", "hello world"});
  CHECK(Featurize(ab) == Featurize(ab));
  CHECK(Featurize(ab) != Featurize(ba));

  const auto single = Featurize(MakeSession("a", {"a"}));
  CHECK(single.nnz() == 1);
  CHECK(single.counts[0] == 1.0f);

  for (int h : {8, 12, 18, 24}) {
    CHECK(AsMap(Featurize(ab, h)) ==
          HashedCounts({"hello", "world", "[SEP]", "good", "bye"}, h));
    CHECK(AsMap(Featurize(ba, h)) ==
          HashedCounts({"good", "bye", "[SEP]", "hello", "world"}, h));
  }
  CHECK_THROWS_AS(Featurize(ab, 7), Error);
  CHECK_THROWS_AS(Featurize(ab, 25), Error);

  const auto x = Featurize(MakeSession("r", {"la la la", "la"}), 10);
  for (float c : x.counts) CHECK(c >= 1.0f);
  CHECK(std::is_sorted(x.buckets.begin(), x.buckets.end()));
  CHECK(Featurize(MakeSession("p", {"!!!"}), 10).nnz() == 1);
}

TEST_CASE("encode") {
  const int h = 8;
  FeatureVector x;
  x.hash_bits = h;
  x.buckets = {3, 17};
  x.counts = {2.0f, 5.0f};
  ParamMatrix<double> w = ParamMatrix<double>::Zero(256, 2);
  w(3, 0) = 1.0;
  w(17, 1) = 1.0;
  const auto y = Encode(w, x);
  CHECK(y[0] == 2.0);
  CHECK(y[1] == 5.0);

  ParamMatrix<double> wrong = ParamMatrix<double>::Zero(128, 2);
  CHECK_THROWS_AS(Encode(wrong, x), Error);
  FeatureVector empty;
  empty.hash_bits = h;
  CHECK_THROWS_AS(Encode(w, empty), Error);

  Rng rng(4);
  const auto enc = DualEncoder<double>::Random(h, 6, 9, 1.0);
  for (int t = 0; t < 50; ++t) {
    const auto a = testing::RandomFeatures(rng, h);
    const auto b = testing::RandomFeatures(rng, h);
    std::map<std::uint32_t, float> sum = AsMap(a);
    for (const auto& [k, v] : AsMap(b)) sum[k] += v;
    FeatureVector ab;
    ab.hash_bits = h;
    for (const auto& [k, v] : sum) {
      ab.buckets.push_back(k);
      ab.counts.push_back(v);
    }
    const auto& wq = enc.weights(Side::kQuery);
    CHECK((Encode(wq, ab) - Encode(wq, a) - Encode(wq, b)).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("similarity") {
  Eigen::Vector2d e0(1, 0), e1(0, 1), a(1, 2), b(3, 4);
  CHECK(Similarity(e0, e1) == 0.0);
  CHECK(Similarity(a, b) == 11.0);
  CHECK(Similarity(a, b) == Similarity(b, a));
  CHECK_THROWS_AS(Similarity(Eigen::VectorXd(a), Eigen::VectorXd::Ones(3)), Error);
}

TEST_CASE("contrastive loss values") {
  const std::vector<double> zero{0.0}, ones{1.0, 1.0};
  CHECK(ContrastiveLoss<double>(0.0, zero) == doctest::Approx(0.693147).epsilon(1e-6));
  CHECK(ContrastiveLoss<double>(1.0, ones) == doctest::Approx(1.098612).epsilon(1e-6));
  const double ten = ContrastiveLoss<double>(10.0, zero);
  CHECK(ten == doctest::Approx(std::log1p(std::exp(-10.0))).epsilon(1e-12));
  CHECK(std::abs(ten - 4.5399e-5) < 1e-8);
  CHECK(ContrastiveLoss<double>(3.0, {}) == 0.0);

  const std::vector<double> far{-700.0, 700.0};
  CHECK(std::isfinite(ContrastiveLoss<double>(700.0, far)));
  CHECK(std::isfinite(ContrastiveLoss<double>(-700.0, far)));
  CHECK(ContrastiveLoss<double>(-700.0, far) == doctest::Approx(1400.0));

  const std::vector<double> bad{std::nan("")};
  CHECK_THROWS_AS(ContrastiveLoss<double>(0.0, bad), Error);
  CHECK_THROWS_AS(ContrastiveLoss<double>(INFINITY, zero), Error);
}

TEST_CASE("contrastive loss properties") {
  Rng rng(12);
  for (int t = 0; t < 500; ++t) {
    std::vector<double> negs(rng.UniformIndex(8));
    for (auto& n : negs) n = 10 * rng.Normal();
    const double pos = 10 * rng.Normal();
    const auto lg = ContrastiveLossWithGrad<double>(pos, negs);
    CHECK(lg.loss >= 0.0);
    if (!negs.empty()) {
      CHECK(ContrastiveLoss<double>(pos + 0.5, negs) < lg.loss);
      double total = -lg.d_positive;
      for (double g : lg.d_negatives) {
        CHECK(g >= 0.0);
        total -= g;
      }
      // d_pos = p_pos - 1 and the negative terms sum to 1 - p_pos
      CHECK(std::abs(total) < 1e-12);
    }
    const std::size_t n = negs.size();
    const std::vector<double> equal(n, pos);
    CHECK(ContrastiveLoss<double>(pos, equal) ==
          doctest::Approx(std::log(1.0 + static_cast<double>(n))).epsilon(1e-12));
  }

  const std::vector<double> one{0.3};
  CHECK(ContrastiveLossWithGrad<double>(0.3, one).d_positive == doctest::Approx(-0.5));
  const std::vector<double> low{0.0};
  const auto saturated = ContrastiveLossWithGrad<double>(500.0, low);
  CHECK(std::abs(saturated.d_positive) < 1e-200);
  CHECK(std::abs(saturated.d_negatives[0]) < 1e-200);
}

TEST_CASE("loss gradients match central differences") {
  Rng rng(31337);
  double worst = 0.0;
  for (int t = 0; t < 40; ++t) {
    const auto enc = DualEncoder<double>::Random(10, 16, 100 + t, 0.3);
    const auto batch = testing::RandomBatch(rng, 10);
    const bool in_batch = t % 2 == 0;
    const auto check = testing::CheckGradients(enc, batch, in_batch, rng);
    CHECK(check.entries > 0);
    worst = std::max(worst, check.relative_error);
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("batch layout") {
  Rng rng(2);
  std::vector<FeaturizedInstance> batch(2);
  for (auto& inst : batch) {
    inst.query = testing::RandomFeatures(rng, 8);
    inst.positive = testing::RandomFeatures(rng, 8);
  }
  batch[1].negatives.push_back(testing::RandomFeatures(rng, 8));
  const auto with = detail::LayoutBatch(batch, true);
  CHECK(with.candidates.size() == 3);
  CHECK(with.per_query[0] == std::vector<std::size_t>{0, 1, 2});
  CHECK(with.per_query[1] == std::vector<std::size_t>{1, 0, 2});
  const auto without = detail::LayoutBatch(batch, false);
  CHECK(without.per_query[0] == std::vector<std::size_t>{0});
  CHECK(without.per_query[1] == std::vector<std::size_t>{1, 2});

  // A lone instance without negatives has zero loss and zero gradient.
  std::vector<FeaturizedInstance> lone(batch.begin(), batch.begin() + 1);
  const auto enc = DualEncoder<double>::Random(8, 4, 1, 1.0);
  const auto g = LossGradients(enc, lone, true);
  CHECK(g.loss == 0.0);
  CHECK(g.query.values.cwiseAbs().maxCoeff() == 0.0);
  CHECK_THROWS_AS(LossGradients(enc, std::span<const FeaturizedInstance>{}, true), Error);
}

TEST_CASE("query and candidate parameters are independent") {
  auto enc = DualEncoder<float>::Random(8, 4, 7, 1.0);
  const Session s = MakeSession("s", {"one two", "three"});
  const auto before = enc.Encode(Side::kCandidate, s);
  enc.weights(Side::kQuery).setRandom();
  CHECK(enc.Encode(Side::kCandidate, s) == before);
  CHECK(enc.weights(Side::kQuery).data() != enc.weights(Side::kCandidate).data());
}

TEST_CASE("checkpoint round-trip") {
  const auto enc = DualEncoder<float>::Random(9, 5, 3, 0.1);
  std::stringstream out;
  SaveCheckpoint(enc, out);
  const std::string bytes = out.str();
  CHECK(bytes.size() == 8 + 12 + 2 * 512 * 5 * 4);
  std::stringstream in(bytes);
  const auto back = LoadCheckpoint(in);
  CHECK(back == enc);
  std::stringstream truncated(bytes.substr(0, bytes.size() - 3));
  CHECK_THROWS_AS(LoadCheckpoint(truncated), Error);
  std::stringstream garbage("LTBM25IX........");
  CHECK_THROWS_AS(LoadCheckpoint(garbage), Error);
}

TEST_CASE("training") {
  const Corpus c = testing::TopicCorpus(400, 40, 4, 10, 21);
  const PairConfig pairs{.n_easy = 3, .n_hard = 2, .seed = 4};
  const auto set = MakeTrainingSet(c, BuildSegmentIndex(c, 4), pairs);
  TrainConfig config;
  config.hash_bits = 12;
  config.dim = 16;
  config.epochs = 5;
  config.batch_size = 16;
  config.seed = 8;

  SUBCASE("loss halves within five epochs") {
    std::vector<EpochStats> seen;
    const auto result = Train(set.instances, config, nullptr,
                              [&](const EpochStats& e) { seen.push_back(e); });
    REQUIRE(result.history.size() == 5);
    CHECK(seen.size() == 5);
    CHECK(result.history.back().mean_loss <= 0.5 * result.history.front().mean_loss);
    CHECK(result.train_size + result.val_size == set.instances.size());
    CHECK(result.val_size > 0);
    const auto best = std::max_element(result.history.begin(), result.history.end(),
                                       [](const auto& a, const auto& b) {
                                         return a.val_recall_at_1 < b.val_recall_at_1;
                                       });
    CHECK(result.best_epoch == best->epoch);
  }
  SUBCASE("same seed gives identical parameters") {
    config.epochs = 2;
    const auto a = Train(set.instances, config);
    const auto b = Train(set.instances, config);
    CHECK(a.encoder == b.encoder);
    config.optimizer = Optimizer::kAdam;
    config.lr = 0.003;
    CHECK(Train(set.instances, config).encoder == Train(set.instances, config).encoder);
  }
  SUBCASE("resume starts from the given parameters") {
    config.epochs = 1;
    const auto first = Train(set.instances, config);
    const auto resumed = Train(set.instances, config, &first.encoder);
    CHECK(!(resumed.encoder == first.encoder));
    CHECK(resumed.history.front().mean_loss < first.history.front().mean_loss);
  }
  SUBCASE("empty input") {
    CHECK_THROWS_AS(Train(std::span<const TrainingInstance>{}, config), Error);
  }
}

TEST_CASE("embedding tables") {
  std::stringstream ok(
      "{\"id\": \"a\", \"vector\": [1, 2, 3, 4]}\n"
      "{\"id\": \"b\", \"vector\": [0, 0, 0, 1]}\n"
      "{\"id\": \"c\", \"vector\": [5, 5, 5, 5]}\n");
  const auto table = ReadEmbeddings(ok);
  CHECK(table.size() == 3);
  CHECK(table.dim() == 4);
  CHECK(table.Lookup("a")[3] == 4.0f);
  CHECK(table.Encode(MakeSession("b", {"whatever"}))[3] == 1.0f);
  try {
    table.Lookup("missing-id");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("missing-id") != std::string::npos);
  }

  std::stringstream mixed(
      "{\"id\": \"a\", \"vector\": [1, 2, 3, 4]}\n"
      "{\"id\": \"b\", \"vector\": [1, 2, 3, 4, 5]}\n");
  CHECK_THROWS_AS(ReadEmbeddings(mixed), Error);
  std::stringstream dup(
      "{\"id\": \"a\", \"vector\": [1]}\n"
      "{\"id\": \"a\", \"vector\": [2]}\n");
  CHECK_THROWS_AS(ReadEmbeddings(dup), Error);
}
