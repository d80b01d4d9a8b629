#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "support.hpp"
#include "unirep/encoders.hpp"
#include "unirep/errors.hpp"

using namespace unirep;
using testing::check_grad;
using testing::random_tensor;
using testing::recon_loss_double;

TEST_CASE("mlp forward maps every timestep") {
  Rng rng(1);
  Mlp enc(MlpRole::encoder, Modality::b, 5, 7, 3, rng);
  CHECK(enc.name() == "enc_b");
  const Tensor x = random_tensor(rng, {4, 2, 5});
  const Tensor y = enc.apply(x);
  REQUIRE(y.shape() == Shape{4, 2, 3});
  // Row-wise: applying to one timestep alone gives the same values.
  const Tensor one = enc.apply(Tensor({1, 5}, std::vector<float>(x.row(3).begin(), x.row(3).end())));
  for (std::size_t k = 0; k < 3; ++k) CHECK(one[k] == doctest::Approx(y.row(3)[k]));
  CHECK(enc.parameter_count() == 5 * 7 + 7 + 7 * 3 + 3);
  CHECK_THROWS_AS(enc.apply(Tensor({2, 4})), DimensionError);
}

TEST_CASE("mlp backward matches finite differences") {
  Rng rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    Mlp mlp(MlpRole::encoder, Modality::a, 4, 6, 5, rng);
    Tensor x = random_tensor(rng, {3, 2, 4});
    const Tensor w = random_tensor(rng, {3, 2, 5});
    auto loss = [&] {
      const Tensor y = mlp.apply(x);
      double s = 0.0;
      for (std::size_t i = 0; i < y.size(); ++i) s += static_cast<double>(y[i]) * w[i];
      return s;
    };
    auto f = mlp.forward(x);
    MlpGrads g = mlp.zero_grads();
    const Tensor gx = mlp.backward(f.cache, w, g);
    CHECK(check_grad(loss, x, gx) < 1e-3);
    CHECK(check_grad(loss, mlp.w1(), g.w1) < 1e-3);
    CHECK(check_grad(loss, mlp.b2(), g.b2) < 1e-3);
  }
}

TEST_CASE("reconstruction loss gradient matches finite differences") {
  Rng rng(3);
  double worst = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t N = 1 + rng.uniform_int(6), T = 1 + rng.uniform_int(4), D = 1 + rng.uniform_int(16);
    Mlp dec(MlpRole::decoder, Modality::a, D, 2 * D, 5, rng);
    Tensor e = random_tensor(rng, {N, T, D});
    const Tensor x = random_tensor(rng, {N, T, 5});
    const ReconResult r = reconstruction_loss(dec, e, x);
    CHECK(r.loss == doctest::Approx(recon_loss_double(dec, e, x)).epsilon(1e-5));
    auto loss = [&] { return recon_loss_double(dec, e, x); };
    worst = std::max(worst, check_grad(loss, e, r.grad_input));
    worst = std::max(worst, check_grad(loss, dec.w2(), r.decoder.w2));
  }
  MESSAGE("recon worst relative error " << worst);
  CHECK(worst < 1e-4);
}

TEST_CASE("adam first step moves each parameter by lr against the gradient sign") {
  Tensor p({4}, std::vector<float>{1.0f, -2.0f, 0.5f, 0.0f});
  const Tensor g({4}, std::vector<float>{0.3f, -4.0f, 1e-3f, 0.0f});
  Adam adam(AdamConfig{0.01, 0.9, 0.999, 1e-8});
  const std::vector<ParamRef> refs{{"p", &p, &g}};
  adam.step(refs);
  // m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps).
  const float expected[4] = {1.0f - 0.01f, -2.0f + 0.01f, 0.5f - 0.01f * (1e-3f / (1e-3f + 1e-8f)), 0.0f};
  for (int i = 0; i < 4; ++i) CHECK(p[i] == doctest::Approx(expected[i]).epsilon(1e-6));
  CHECK(adam.steps() == 1);
}

TEST_CASE("adam rejects non-finite gradients before touching anything") {
  Tensor p1({2}, 1.0f), p2({2}, 1.0f);
  Tensor g1({2}, 0.5f), g2({2}, 0.5f);
  g2[1] = std::numeric_limits<float>::infinity();
  Adam adam;
  const std::vector<ParamRef> refs{{"ok", &p1, &g1}, {"enc_a.w1", &p2, &g2}};
  try {
    adam.step(refs);
    FAIL("expected TrainingError");
  } catch (const TrainingError& e) {
    CHECK(std::string(e.what()).find("enc_a.w1") != std::string::npos);
  }
  CHECK(p1[0] == 1.0f);
  CHECK(adam.steps() == 0);
}

TEST_CASE("modality names round trip") {
  CHECK(parse_modality("a") == Modality::a);
  CHECK(parse_modality("b") == Modality::b);
  CHECK(other(Modality::a) == Modality::b);
  CHECK_THROWS_AS(parse_modality("c"), ConfigError);
}
