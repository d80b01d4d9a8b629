#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "support.hpp"
#include "unirep/codebook.hpp"
#include "unirep/errors.hpp"

using namespace unirep;
using testing::check_grad;
using testing::random_tensor;

TEST_CASE("quantize equals an exhaustive scan") {
  Rng rng(21);
  const Codebook cb = Codebook::from_codewords(random_tensor(rng, {64, 8}));
  const Tensor z = random_tensor(rng, {1000, 8});
  const auto q = cb.quantize(z);
  REQUIRE(q.indices.size() == 1000);
  for (std::size_t i = 0; i < 1000; ++i) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t l = 0; l < 64; ++l) {
      double d = 0.0;
      for (std::size_t k = 0; k < 8; ++k) {
        const double diff = static_cast<double>(z.at(i, k)) - cb.codewords().at(l, k);
        d += diff * diff;
      }
      if (d < best_d) {
        best_d = d;
        best = l;
      }
    }
    CHECK(q.indices[i] == best);
    CHECK(q.distances[i] == doctest::Approx(best_d));
    for (std::size_t k = 0; k < 8; ++k) CHECK(q.quantized.at(i, k) == cb.codewords().at(best, k));
  }
}

TEST_CASE("ties resolve to the lowest index") {
  Tensor words({4, 2}, std::vector<float>{1, 0, -1, 0, 0, 1, 1, 0});
  const Codebook cb = Codebook::from_codewords(words);
  // Equidistant from codewords 0, 1, 2 and 3.
  const auto q = cb.quantize(Tensor({2, 2}, std::vector<float>{0, 0, 1, 0}));
  CHECK(q.indices[0] == 0);
  CHECK(q.indices[1] == 0);  // duplicates 0 and 3
}

TEST_CASE("quantize keeps the leading shape") {
  Rng rng(22);
  const Codebook cb = Codebook::from_codewords(random_tensor(rng, {5, 3}));
  const auto q = cb.quantize(random_tensor(rng, {2, 4, 3}));
  CHECK(q.quantized.shape() == Shape{2, 4, 3});
  CHECK(q.indices.size() == 8);
  CHECK_THROWS_AS(cb.quantize(Tensor({2, 4})), DimensionError);
}

TEST_CASE("ema update follows the closed form") {
  Tensor words({2, 2}, std::vector<float>{0, 0, 10, 10});
  Codebook cb = Codebook::from_codewords(words, 0.5, 1e-12);
  const Tensor z({3, 2}, std::vector<float>{1, 1, 3, 3, 10, 12});
  cb.ema_update(z, std::vector<std::uint32_t>{0, 0, 1});
  // N = 0.5 * 1 + 0.5 * count; m = 0.5 * e + 0.5 * sum; e = m / N (epsilon negligible).
  CHECK(cb.cluster_size()[0] == doctest::Approx(1.5));
  CHECK(cb.cluster_size()[1] == doctest::Approx(1.0));
  CHECK(cb.codewords().at(0, 0) == doctest::Approx(2.0 / 1.5));
  CHECK(cb.codewords().at(1, 1) == doctest::Approx(11.0));
  CHECK(cb.steps() == 1);
  CHECK_THROWS_AS(cb.ema_update(z, std::vector<std::uint32_t>{0, 5, 1}), DataError);
}

TEST_CASE("ema converges to stationary cluster means") {
  Rng rng(23);
  const std::size_t D = 6;
  const Tensor means = random_tensor(rng, {4, D}, 3.0);
  auto batch = [&](std::size_t n) {
    Tensor z({n, D});
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t c = i % 4;
      for (std::size_t k = 0; k < D; ++k) z.at(i, k) = static_cast<float>(means.at(c, k) + 0.05 * rng.normal());
    }
    return z;
  };
  Codebook cb(4, D, 0.99);
  cb.init_from_samples(rng, batch(64), 0.01);
  for (int step = 0; step < 500; ++step) {
    const Tensor z = batch(256);
    cb.ema_update(z, cb.quantize(z).indices);
  }
  for (std::size_t c = 0; c < 4; ++c) {
    double best = 1e9;
    for (std::size_t l = 0; l < 4; ++l) best = std::min(best, std::sqrt(squared_distance(means.row(c), cb.codeword(l))));
    CHECK(best < 1e-2);
  }
}

TEST_CASE("commit loss gradient matches finite differences") {
  Rng rng(24);
  double worst = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t N = 1 + rng.uniform_int(6), T = 1 + rng.uniform_int(4), D = 1 + rng.uniform_int(16);
    Tensor z = random_tensor(rng, {N, T, D});
    const Tensor q = random_tensor(rng, {N, T, D});
    const auto r = commit_loss(z, q);
    double mse = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) mse += (static_cast<double>(z[i]) - q[i]) * (static_cast<double>(z[i]) - q[i]);
    CHECK(r.loss == doctest::Approx(mse / static_cast<double>(z.size())));
    worst = std::max(worst, check_grad([&] { return commit_loss(z, q).loss; }, z, r.grad));
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("straight-through forwards codewords and passes gradients unchanged") {
  Rng rng(25);
  const Tensor z = random_tensor(rng, {3, 4}), q = random_tensor(rng, {3, 4}), g = random_tensor(rng, {3, 4});
  CHECK(StraightThrough::forward(z, q) == q);
  CHECK(StraightThrough::backward(g) == g);
}

TEST_CASE("k-means++ seeding draws codewords near the data") {
  Rng rng(26);
  Tensor samples({40, 2});
  for (std::size_t i = 0; i < 40; ++i) {
    samples.at(i, 0) = i < 20 ? -5.0f : 5.0f;
    samples.at(i, 1) = 0.0f;
  }
  Codebook cb(2, 2);
  cb.init_from_samples(rng, samples, 0.0);
  CHECK(cb.codewords().at(0, 0) * cb.codewords().at(1, 0) < 0.0f);
  for (double n : cb.cluster_size()) CHECK(n == 1.0);
}

TEST_CASE("usage statistics") {
  const std::vector<std::uint32_t> a{0, 0, 1, 3};
  const auto counts = usage_counts(a, 4);
  CHECK(counts == std::vector<std::size_t>{2, 1, 0, 1});
  CHECK(perplexity(std::vector<std::size_t>{5, 5, 5, 5}) == doctest::Approx(4.0));
  CHECK(perplexity(std::vector<std::size_t>{7, 0, 0}) == doctest::Approx(1.0));
  CHECK(perplexity(std::vector<std::size_t>{0, 0}) == doctest::Approx(1.0));

  // Codeword 0 used by both, 1 only by a, 2 by b with a 5% trace from a, 3 unused.
  const auto table = coactivation_stats({{10, 8, 1, 0}, {10, 0, 19, 0}});
  CHECK(table.rows[0].share_class == ShareClass::all);
  CHECK(table.rows[0].label == "shared");
  CHECK(table.rows[1].share_class == ShareClass::single);
  CHECK(table.rows[2].share_class == ShareClass::single);
  CHECK(table.rows[3].share_class == ShareClass::dead);
  CHECK(table.count(ShareClass::single) == 2);
  CHECK(table.rows[0].shares[0] == doctest::Approx(0.5));
  CHECK(table.to_csv().rfind("codeword_id,share_a,share_b,class", 0) == 0);

  const auto three = coactivation_stats({{5, 5, 0}, {5, 0, 0}, {5, 5, 9}});
  CHECK(three.rows[0].share_class == ShareClass::all);
  CHECK(three.rows[1].share_class == ShareClass::pair);
}

TEST_CASE("dead codewords can be reseeded") {
  Rng rng(27);
  Codebook cb = Codebook::from_codewords(Tensor({3, 2}, std::vector<float>{0, 0, 100, 100, -100, -100}));
  const Tensor z({4, 2}, std::vector<float>{0, 0, 0.1f, 0, 0, 0.1f, 0.1f, 0.1f});
  for (int i = 0; i < 3; ++i) cb.ema_update(z, cb.quantize(z).indices);
  CHECK(cb.idle_steps()[1] == 3);
  CHECK(cb.reseed_dead(rng, z, 3) == 2);
  CHECK(std::abs(cb.codewords().at(1, 0)) < 1.0f);
}
