#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "support.hpp"
#include "unirep/errors.hpp"
#include "unirep/pipeline.hpp"

using namespace unirep;
using testing::random_tensor;
using testing::tiny_config;

TEST_CASE("model initialisation is seeded") {
  const auto c = tiny_config();
  const Model a = make_model(c, 8, 8), b = make_model(c, 8, 8), d = make_model(c.with("seed", 8), 8, 8);
  CHECK(a.frozen_checksum() == b.frozen_checksum());
  CHECK(a.frozen_checksum() != d.frozen_checksum());
  CHECK(a.universe.size() == 24);
  CHECK(a.classifier.input_dim() == 16);
  const Model m = make_model(c.with("cujp.mode", "mmjp"), 8, 8);
  CHECK(m.classifier.input_dim() == 32);
  CHECK(m.universe.segments() == 6);
}

TEST_CASE("one step reports every loss term") {
  const auto c = tiny_config();
  const Dataset data = generate(c.gen_spec());
  const auto& pre = data.get(Split::pretrain);
  const std::vector<std::size_t> rows{0, 1, 2, 3, 4, 5};
  const ModalBatch batch = gather(pre, rows);
  Trainer trainer(c, 8, 8);
  trainer.ensure_codebook(batch.x_a, batch.x_b);
  Rng rng(1);
  const auto out = trainer.compute(batch.x_a, batch.x_b, rng);
  const auto& l = out.losses;
  for (double v : {l.fine, l.coarse, l.cujp, l.recon, l.commit, l.total}) {
    CHECK(std::isfinite(v));
    CHECK(v > 0.0);
  }
  const auto& w = c.train.weights;
  CHECK(l.total == doctest::Approx(w.fcmi * (l.fine + l.coarse) + w.cujp * l.cujp + w.recon * l.recon + w.commit * l.commit));
  CHECK(out.z_a.shape() == Shape{6, 4, 16});
  CHECK(out.q_a.indices.size() == 24);

  Trainer no_jigsaw(c.with("train.lambda_cujp", 0.0), 8, 8);
  no_jigsaw.ensure_codebook(batch.x_a, batch.x_b);
  Rng rng2(1);
  CHECK(no_jigsaw.compute(batch.x_a, batch.x_b, rng2).losses.cujp == 0.0);

  Trainer no_fine(c.with("fcmi.fine", false), 8, 8);
  no_fine.ensure_codebook(batch.x_a, batch.x_b);
  Rng rng3(1);
  const auto nf = no_fine.compute(batch.x_a, batch.x_b, rng3).losses;
  CHECK(nf.fine == 0.0);
  CHECK(nf.coarse > 0.0);
}

TEST_CASE("pretraining is deterministic and logs each epoch") {
  const auto c = tiny_config().with("train.epochs", 2);
  const Dataset data = generate(c.gen_spec());
  const auto r1 = pretrain(c, data), r2 = pretrain(c, data);
  CHECK(r1.model.frozen_checksum() == r2.model.frozen_checksum());
  REQUIRE(r1.log.size() == 2);
  CHECK(r1.log[0].to_json().dump() == r2.log[0].to_json().dump());
  const auto j = r1.log[1].to_json();
  CHECK(j["epoch"] == 2);
  for (const char* k : {"l_fine", "l_coarse", "l_cujp", "l_recon", "l_commit", "total", "perplexity"}) {
    CHECK(j.contains(k));
  }
  CHECK(r1.model.codebook_ready);
}

TEST_CASE("lambda_cujp = 0 logs an exact zero") {
  const auto c = tiny_config().with("train.lambda_cujp", 0.0);
  const auto r = pretrain(c, generate(c.gen_spec()));
  CHECK(r.log[0].mean.cujp == 0.0);
}

TEST_CASE("a diverging run raises TrainingError naming the loss") {
  const auto c = tiny_config().with("train.lr", 1e30).with("train.epochs", 3);
  try {
    pretrain(c, generate(c.gen_spec()));
    FAIL("expected TrainingError");
  } catch (const TrainingError& e) {
    const std::string msg = e.what();
    CHECK((msg.find("non-finite") != std::string::npos));
  }
}

TEST_CASE("downstream evaluation leaves the pretrained model untouched") {
  const auto c = tiny_config();
  const Dataset data = generate(c.gen_spec());
  const auto pre = pretrain(c, data);
  const auto before = pre.model.frozen_checksum();
  const EvalReport r = run_downstream(pre.model, data, c, Modality::a);
  CHECK(pre.model.frozen_checksum() == before);
  CHECK(r.source_encoder == "enc_a");
  CHECK(r.target_encoder == "enc_b");
  CHECK(r.scores.per_class.size() == 4);
  CHECK(r.scores.unk.has_value());
  CHECK(r.recall.size() == 3);

  const auto j = r.to_json();
  for (const char* k : {"direction", "theta", "os_star", "unk", "hos", "closed_set_accuracy", "per_class", "recall",
                        "codebook", "known_classes", "unknown_classes", "seed", "split"}) {
    CHECK(j.contains(k));
  }
  CHECK(j["direction"] == "a->b");
  const auto header = EvalReport::csv_header(), row = r.csv_row();
  CHECK(std::count(header.begin(), header.end(), ',') == std::count(row.begin(), row.end(), ','));

  const EvalReport back = run_downstream(pre.model, data, c, Modality::b);
  CHECK(back.to_json()["direction"] == "b->a");
}

TEST_CASE("linear probe on separable features") {
  Rng rng(5);
  const std::vector<std::uint32_t> known{2, 5, 9};
  Tensor x({60, 3});
  std::vector<std::uint32_t> labels(60);
  for (std::size_t i = 0; i < 60; ++i) {
    const std::size_t c = i % 3;
    labels[i] = known[c];
    for (std::size_t k = 0; k < 3; ++k) x.at(i, k) = static_cast<float>((k == c ? 3.0 : 0.0) + 0.1 * rng.normal());
  }
  const ProbeHead probe = train_probe(x, labels, known, ProbeOptions{}, rng);
  const auto preds = predict(probe.logits(x));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < 60; ++i) correct += probe.classes[preds[i].class_index] == labels[i];
  CHECK(correct == 60);
  CHECK(calibrate_threshold(probe, x, labels, 5.0) > 0.5);

  std::vector<std::uint32_t> bad = labels;
  bad[3] = 4;
  CHECK_THROWS_AS(train_probe(x, bad, known, ProbeOptions{}, rng), DataError);

  // Nothing classified correctly: theta falls back to 0.
  std::vector<std::uint32_t> shifted(60);
  for (std::size_t i = 0; i < 60; ++i) shifted[i] = known[(i + 1) % 3];
  CHECK(calibrate_threshold(probe, x, shifted, 5.0) == 0.0);
}

TEST_CASE("feature scaling") {
  Rng rng(6);
  Tensor x = random_tensor(rng, {40, 5}, 3.0);
  for (std::size_t i = 0; i < 40; ++i) x.at(i, 2) += 10.0f;
  Tensor s = x;
  const auto scaler = fit_scaler(s, FeatureNorm::standardize);
  scaler.apply(s);
  for (std::size_t k = 0; k < 5; ++k) {
    double m = 0.0, v = 0.0;
    for (std::size_t i = 0; i < 40; ++i) m += s.at(i, k);
    m /= 40;
    for (std::size_t i = 0; i < 40; ++i) v += (s.at(i, k) - m) * (s.at(i, k) - m);
    CHECK(std::abs(m) < 1e-5);
    CHECK(v / 40 == doctest::Approx(1.0).epsilon(1e-4));
  }
  Tensor l = x;
  fit_scaler(l, FeatureNorm::l2).apply(l);
  for (std::size_t i = 0; i < 40; ++i) CHECK(std::sqrt(dot(l.row(i), l.row(i))) == doctest::Approx(1.0));
  Tensor n = x;
  fit_scaler(n, FeatureNorm::none).apply(n);
  CHECK(n == x);
  Tensor wrong({2, 3});
  CHECK_THROWS_AS(scaler.apply(wrong), DimensionError);
}

TEST_CASE("threshold sweep is monotone on random logits") {
  Rng rng(7);
  const std::vector<std::uint32_t> classes{0, 1, 2};
  std::vector<std::uint32_t> labels(40);
  for (auto& l : labels) l = static_cast<std::uint32_t>(rng.uniform_int(3));
  const auto known = predict(random_tensor(rng, {40, 3}, 2.0));
  const auto unknown = predict(random_tensor(rng, {25, 3}, 2.0));
  double prev_os = 1e9, prev_unk = -1.0;
  for (int i = 0; i <= 50; ++i) {
    const auto s = score_open_set(known, labels, classes, unknown, i / 50.0);
    CHECK(s.os_star <= prev_os);
    CHECK(*s.unk >= prev_unk);
    prev_os = s.os_star;
    prev_unk = *s.unk;
  }
}

TEST_CASE("pooled features") {
  const auto c = tiny_config();
  const Model m = make_model(c, 8, 8);
  Rng rng(8);
  const Tensor x = random_tensor(rng, {5, 4, 8});
  CHECK(pooled_features(m, Modality::a, x, FeatureSource::continuous).shape() == Shape{5, 16});
  CHECK(pooled_features(m, Modality::a, x, FeatureSource::continuous, Pooling::concat).shape() == Shape{5, 64});
}
