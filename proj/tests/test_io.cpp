#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "support.hpp"
#include "unirep/ablation.hpp"
#include "unirep/errors.hpp"
#include "unirep/io.hpp"

using namespace unirep;
using testing::random_tensor;
using testing::tiny_config;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("unirep_io_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("tensor files round trip bit-exactly") {
  Rng rng(51);
  const fs::path dir = scratch("tensor");
  const Tensor t = random_tensor(rng, {3, 4, 5});
  write_tensor(dir / "t", t);
  CHECK(fs::file_size(dir / "t.bin") == 60 * 4);
  CHECK(read_json(dir / "t.json")["shape"] == nlohmann::json::array({3, 4, 5}));
  CHECK(read_tensor(dir / "t") == t);

  std::ofstream(dir / "t.bin", std::ios::binary | std::ios::trunc) << "short";
  CHECK_THROWS_AS(read_tensor(dir / "t"), DataError);
  CHECK_THROWS_AS(read_tensor(dir / "missing"), DataError);
  fs::remove_all(dir);
}

TEST_CASE("datasets round trip") {
  const fs::path dir = scratch("dataset");
  const auto c = tiny_config();
  const Dataset d = generate(c.gen_spec());
  save_dataset(dir, d);
  const Dataset back = load_dataset(dir);
  CHECK(back.classes.known == d.classes.known);
  CHECK(back.classes.unknown == d.classes.unknown);
  CHECK(gen_spec_to_json(back.spec) == gen_spec_to_json(d.spec));
  for (auto sp : kAllSplits) {
    CHECK(back.get(sp).x_a == d.get(sp).x_a);
    CHECK(back.get(sp).x_b == d.get(sp).x_b);
    CHECK(back.get(sp).labels == d.get(sp).labels);
    CHECK(back.get(sp).sample_ids == d.get(sp).sample_ids);
  }
  const auto h1 = file_hash(dir / "manifest.json");
  save_dataset(dir, d);
  CHECK(file_hash(dir / "manifest.json") == h1);
  CHECK(h1.size() == 16);
  CHECK_THROWS_AS(load_dataset(scratch("nothing")), DataError);
  fs::remove_all(dir);
}

TEST_CASE("checkpoints restore every parameter") {
  const fs::path dir = scratch("ckpt");
  const auto c = tiny_config();
  const auto pre = pretrain(c, generate(c.gen_spec()));
  save_checkpoint(dir, pre.model);
  const Model back = load_checkpoint(dir);
  CHECK(back.frozen_checksum() == pre.model.frozen_checksum());
  CHECK(back.classifier.weight() == pre.model.classifier.weight());
  CHECK(back.universe.table() == pre.model.universe.table());
  CHECK(back.codebook.cluster_size() == pre.model.codebook.cluster_size());
  CHECK(back.codebook_ready);
  const auto manifest = read_json(dir / "manifest.json");
  bool found = false;
  for (const auto& p : manifest["parameters"]) found = found || p["name"] == "enc_b.w2";
  CHECK(found);

  const Dataset d = generate(c.gen_spec());
  CHECK(run_downstream(back, d, c, Modality::a).to_json() == run_downstream(pre.model, d, c, Modality::a).to_json());
  CHECK_THROWS_AS(load_checkpoint(scratch("absent")), DataError);
  fs::remove_all(dir);
}

TEST_CASE("codebook state round trips") {
  const fs::path dir = scratch("codebook");
  Rng rng(52);
  Codebook cb(6, 4, 0.9);
  const Tensor z = random_tensor(rng, {30, 4});
  cb.init_from_samples(rng, z, 0.01);
  cb.ema_update(z, cb.quantize(z).indices);
  save_codebook(dir, cb);
  const Codebook back = load_codebook(dir);
  CHECK(back.checksum() == cb.checksum());
  CHECK(back.steps() == 1);
  CHECK(back.gamma() == cb.gamma());
  fs::remove_all(dir);
}

TEST_CASE("ablation merging is keyed and idempotent") {
  const fs::path dir = scratch("ablation");
  const auto base = tiny_config();
  SweepSpec sweep;
  sweep.cells = {{"coarse", {{"fcmi.fine", false}, {"train.lambda_cujp", 0.0}}},
                 {"bad", {{"cujp.segments", 3}}}};
  sweep.seeds = {1, 2};
  const auto rows = run_ablation(base, sweep, dir, 1);
  CHECK(rows.size() == 4);
  std::size_t skipped = 0;
  for (const auto& r : rows) skipped += r.status == "skipped";
  CHECK(skipped == 2);
  const std::string first = read_text(dir / "ablation.csv");
  CHECK(first.rfind(ablation_csv_header(), 0) == 0);
  CHECK(std::count(first.begin(), first.end(), '\n') == 5);

  merge_ablation(dir);
  CHECK(read_text(dir / "ablation.csv") == first);

  // Re-running one cell keeps the other cell's rows and does not duplicate.
  SweepSpec again;
  again.cells = {sweep.cells[0]};
  again.seeds = {1, 2};
  run_ablation(base, again, dir, 1);
  CHECK(read_text(dir / "ablation.csv") == first);

  const auto means = mean_hos(rows);
  CHECK(means.count("coarse") == 1);
  CHECK(means.count("bad") == 0);
  fs::remove_all(dir);
}

TEST_CASE("sweep presets") {
  CHECK(preset_cells("loss").size() == 7);
  const auto jig = preset_cells("jigsaw");
  REQUIRE(jig.size() == 5);
  CHECK(jig[0].name == "off");
  CHECK(preset_cells("mask").size() == 2);
  CHECK_THROWS_AS(preset_cells("nope"), ConfigError);
  const auto s = parse_sweep(nlohmann::json{{"preset", "mask"}}, 10);
  CHECK(s.seeds == std::vector<std::uint64_t>{10, 11, 12, 13, 14});
  const auto custom = parse_sweep(nlohmann::json{{"cells", {{{"name", "x"}, {"overrides", {{"fcmi.tau", 0.5}}}}}},
                                                 {"seeds", {3}}},
                                  0);
  CHECK(custom.cells.size() == 1);
  CHECK(custom.seeds == std::vector<std::uint64_t>{3});
}
