// One line per acceptance criterion; exit status 1 if any criterion fails.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <set>
#include <sstream>

#include "support.hpp"
#include "unirep/ablation.hpp"
#include "unirep/cli.hpp"
#include "unirep/codebook.hpp"
#include "unirep/cujp.hpp"
#include "unirep/errors.hpp"
#include "unirep/fcmi.hpp"
#include "unirep/io.hpp"
#include "unirep/metrics.hpp"
#include "unirep/pipeline.hpp"

using namespace unirep;
using testing::check_grad;
using testing::random_tensor;

namespace {

constexpr double kHosTol = 0.01;
constexpr double kGradTol = 1e-4;
constexpr double kGradStep = 1e-3;
constexpr int kGradInstances = 10;
constexpr double kOracleTol = 1e-6;
constexpr int kOracleInstances = 100;
constexpr std::size_t kQuantVectors = 1000, kQuantCodewords = 64;
constexpr double kEmaTol = 1e-2;
constexpr int kEmaUpdates = 500;
constexpr double kEmaGamma = 0.99;
constexpr double kLearnabilityFloor = 90.0;
constexpr int kTrendSeeds = 5;
constexpr int kThetaSteps = 100;

int failures = 0;

void report(int id, bool pass, const std::string& name, const std::string& detail) {
  std::printf("[%s] criterion %2d  %-34s %s\n", pass ? "PASS" : "FAIL", id, name.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

void hos_arithmetic() {
  const double cases[3][3] = {{51.57, 57.54, 54.39}, {47.15, 79.07, 59.08}, {35.44, 80.23, 49.17}};
  double worst = 0.0;
  for (const auto& c : cases) worst = std::max(worst, std::abs(harmonic_open_set(c[0], c[1]) - c[2]));
  report(1, worst < kHosTol, "HOS arithmetic", fmt("max |error| %.4f (tol %.2f)", worst, kHosTol));
}

void gradient_suite() {
  const auto start = std::chrono::steady_clock::now();
  Rng rng(2024);
  double fine = 0, coarse = 0, commit = 0, recon = 0, cujp = 0;
  auto dims = [&] {
    return std::array<std::size_t, 3>{2 + rng.uniform_int(5), 2 + rng.uniform_int(3), 1 + rng.uniform_int(16)};
  };
  for (int i = 0; i < kGradInstances; ++i) {
    const auto [N, T, D] = dims();
    const bool normalize = i % 2 == 0;
    Tensor m = random_tensor(rng, {N, T, D}), t = random_tensor(rng, {N, T, D});
    const auto f = fine_loss(m, t, 1.0, normalize);
    const auto c = coarse_loss(m, t, 1.0, normalize);
    auto fl = [&] { return fine_loss(m, t, 1.0, normalize).loss; };
    auto cl = [&] { return coarse_loss(m, t, 1.0, normalize).loss; };
    fine = std::max({fine, check_grad(fl, m, f.grad_masked, kGradStep), check_grad(fl, t, f.grad_target, kGradStep)});
    coarse = std::max({coarse, check_grad(cl, m, c.grad_masked, kGradStep), check_grad(cl, t, c.grad_target, kGradStep)});

    const Tensor q = random_tensor(rng, {N, T, D});
    const auto cm = commit_loss(m, q);
    commit = std::max(commit, check_grad([&] { return commit_loss(m, q).loss; }, m, cm.grad, kGradStep));

    Mlp dec(MlpRole::decoder, Modality::a, D, 2 * D, 6, rng);
    const Tensor x = random_tensor(rng, {N, T, 6});
    const auto rr = reconstruction_loss(dec, m, x);
    recon = std::max(recon, check_grad([&] { return testing::recon_loss_double(dec, m, x); }, m, rr.grad_input, kGradStep));

    const std::size_t W = 4 * (1 + rng.uniform_int(4));
    const auto u = build_universe(rng, 4, 24);
    PermClassifier clf(W, u.size(), rng);
    Tensor za = random_tensor(rng, {N, W}), zb = random_tensor(rng, {N, W});
    const Rng draw = rng.derive(i);
    auto instances = [&] {
      Rng r = draw;
      std::vector<JigsawInstance> out;
      for (std::size_t k = 0; k < N; ++k) out.push_back(compose_instance(r, u, za.row(k), zb.row(k)));
      return out;
    };
    const auto inst = instances();
    const auto res = cujp_loss(clf, inst);
    Tensor ga({N, W}), gb({N, W});
    const std::size_t lens[2] = {W, W};
    for (std::size_t k = 0; k < N; ++k) {
      const auto back = scatter_to_sources(inst[k], res.grad_inputs.row(k), lens, 4);
      std::copy(back[0].data().begin(), back[0].data().end(), ga.row(k).begin());
      std::copy(back[1].data().begin(), back[1].data().end(), gb.row(k).begin());
    }
    auto jl = [&] { return cujp_loss(clf, instances()).loss; };
    cujp = std::max({cujp, check_grad(jl, za, ga, kGradStep), check_grad(jl, zb, gb, kGradStep),
                     check_grad(jl, clf.weight(), res.grad_weight, kGradStep)});
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const double worst = std::max({fine, coarse, commit, recon, cujp});
  std::ostringstream d;
  d.precision(2);
  d << std::scientific << "fine " << fine << " coarse " << coarse << " commit " << commit << " recon " << recon
    << " cujp " << cujp << std::fixed << " (" << secs << " s)";
  report(2, worst < kGradTol && secs < 30.0, "gradient suite", d.str());
}

double nce(const std::vector<std::vector<double>>& q, const std::vector<std::vector<double>>& k) {
  double loss = 0.0;
  for (std::size_t r = 0; r < q.size(); ++r) {
    double denom = 0.0, pos = 0.0;
    for (std::size_t c = 0; c < k.size(); ++c) {
      double s = 0.0;
      for (std::size_t d = 0; d < q[r].size(); ++d) s += q[r][d] * k[c][d];
      denom += std::exp(s);
      if (c == r) pos = s;
    }
    loss += std::log(denom) - pos;
  }
  return loss / static_cast<double>(q.size());
}

void infonce_oracle() {
  Rng rng(3);
  double worst = 0.0;
  for (int i = 0; i < kOracleInstances; ++i) {
    const std::size_t N = 2 + rng.uniform_int(5), T = 2 + rng.uniform_int(3), D = 1 + rng.uniform_int(16);
    const Tensor m = random_tensor(rng, {N, T, D}), t = random_tensor(rng, {N, T, D});
    auto rows = [&](const Tensor& x, std::size_t first, std::size_t count, std::size_t width) {
      std::vector<std::vector<double>> out;
      for (std::size_t r = 0; r < count; ++r) {
        out.emplace_back(x.data().begin() + (first + r) * width, x.data().begin() + (first + r + 1) * width);
      }
      return out;
    };
    double fine = 0.0;
    for (std::size_t s = 0; s < N; ++s) fine += nce(rows(m, s * T, T, D), rows(t, s * T, T, D));
    fine /= static_cast<double>(N);
    const double coarse = nce(rows(m, 0, N, T * D), rows(t, 0, N, T * D));
    worst = std::max({worst, std::abs(fine_loss(m, t, 1.0).loss - fine), std::abs(coarse_loss(m, t, 1.0).loss - coarse)});
  }
  double uniform = 0.0;
  for (std::size_t N : {2u, 5u}) {
    for (std::size_t T : {2u, 4u}) {
      const Tensor z({N, T, 8});
      uniform = std::max({uniform, std::abs(fine_loss(z, z, 1.0).loss - std::log(double(T))),
                          std::abs(coarse_loss(z, z, 1.0).loss - std::log(double(N)))});
    }
  }
  report(3, worst < kOracleTol && uniform < kOracleTol, "InfoNCE oracle equivalence",
         fmt("max |error| %.2e over %g instances, uniform-logit %.2e", worst, kOracleInstances, uniform));
}

void quantization_oracle() {
  Rng rng(4);
  const Codebook cb = Codebook::from_codewords(random_tensor(rng, {kQuantCodewords, 8}));
  const Tensor z = random_tensor(rng, {kQuantVectors, 8});
  const auto q = cb.quantize(z);
  std::size_t mismatches = 0;
  for (std::size_t i = 0; i < kQuantVectors; ++i) {
    std::size_t best = 0;
    double bd = INFINITY;
    for (std::size_t l = 0; l < kQuantCodewords; ++l) {
      const double d = squared_distance(z.row(i), cb.codeword(l));
      if (d < bd) {
        bd = d;
        best = l;
      }
    }
    mismatches += q.indices[i] != best;
  }
  const Codebook dup = Codebook::from_codewords(Tensor({3, 2}, std::vector<float>{1, 0, -1, 0, 1, 0}));
  const auto t = dup.quantize(Tensor({2, 2}, std::vector<float>{0, 0, 1, 0}));
  const bool ties = t.indices[0] == 0 && t.indices[1] == 0;
  report(4, mismatches == 0 && ties, "quantization oracle",
         fmt("%g mismatches over %g vectors (H=%g), ties to lowest index", mismatches, kQuantVectors, kQuantCodewords) +
             (ties ? " ok" : " WRONG"));
}

void ema_convergence() {
  const auto start = std::chrono::steady_clock::now();
  Rng rng(5);
  const std::size_t D = 8;
  const Tensor means = random_tensor(rng, {4, D}, 3.0);
  auto batch = [&](std::size_t n) {
    Tensor z({n, D});
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < D; ++k) z.at(i, k) = static_cast<float>(means.at(i % 4, k) + 0.05 * rng.normal());
    }
    return z;
  };
  Codebook cb(4, D, kEmaGamma);
  cb.init_from_samples(rng, batch(64), 0.01);
  for (int s = 0; s < kEmaUpdates; ++s) {
    const Tensor z = batch(256);
    cb.ema_update(z, cb.quantize(z).indices);
  }
  double worst = 0.0;
  std::set<std::size_t> used;
  for (std::size_t c = 0; c < 4; ++c) {
    double best = INFINITY;
    std::size_t arg = 0;
    for (std::size_t l = 0; l < 4; ++l) {
      const double d = std::sqrt(squared_distance(means.row(c), cb.codeword(l)));
      if (d < best) {
        best = d;
        arg = l;
      }
    }
    used.insert(arg);
    worst = std::max(worst, best);
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  report(5, worst < kEmaTol && used.size() == 4 && secs < 10.0, "EMA convergence",
         fmt("max L2 to true mean %.2e after %g updates (%.2f s)", worst, kEmaUpdates, secs));
}

void permutation_combinatorics() {
  Rng rng(6);
  const auto u = build_universe(rng, 4, 24);
  const std::set<Permutation> distinct(u.table().begin(), u.table().end());
  std::string msg;
  try {
    mmjp_universe_bound(3, 4, RunConfig{}.cujp.mmjp_cap);
  } catch (const ConfigError& e) {
    msg = e.what();
  }
  const bool cap = msg.find("12! = 479001600") != std::string::npos;
  report(6, distinct.size() == 24 && u.size() == 24 && cap, "permutation combinatorics",
         fmt("O=4,P=24 -> %g distinct orderings; ", distinct.size()) + (cap ? "MMJP 3x4 rejected: " + msg : "cap not enforced"));
}

int cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  if (code != 0) std::fprintf(stderr, "%s", err.str().c_str());
  return code;
}

void determinism() {
  const fs::path root = fs::temp_directory_path() / "unirep_acceptance_det";
  fs::remove_all(root);
  std::string reports[2], csvs[2];
  double secs = 0.0;
  bool ok = true;
  for (int k = 0; k < 2; ++k) {
    const auto start = std::chrono::steady_clock::now();
    const fs::path dir = root / ("run" + std::to_string(k));
    ok = ok && cli({"generate", "--out", (dir / "data").string(), "--seed", "11"}) == 0;
    ok = ok && cli({"pretrain", "--dataset", (dir / "data").string(), "--out", (dir / "run").string(), "--seed", "11"}) == 0;
    ok = ok && cli({"eval", "--run", (dir / "run").string(), "--direction", "a->b"}) == 0;
    if (!ok) break;
    reports[k] = read_text(dir / "run" / "eval" / "a2b_split1.json");
    csvs[k] = read_text(dir / "run" / "eval" / "a2b_split1.csv");
    secs = std::max(secs, std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
  }
  fs::remove_all(root);
  const bool same = ok && reports[0] == reports[1] && csvs[0] == csvs[1] && !reports[0].empty();
  report(7, same && secs < 300.0, "end-to-end determinism",
         fmt("reports %g bytes, identical: ", reports[0].size()) + (same ? "yes" : "no") +
             fmt(" (slowest run %.1f s)", secs));
}

void learnability() {
  const RunConfig c = RunConfig{}.with("gen.latent_noise", 0.0).with("gen.sigma", 0.0).with("gen.corruption", 0.0);
  const PipelineResult r = run_pipeline(c);
  const double acc = r.report.scores.closed_set_accuracy;
  report(8, acc >= kLearnabilityFloor, "learnability floor",
         fmt("noiseless a->b closed-set accuracy %.2f%% (floor %.0f%%)", acc, kLearnabilityFloor));
}

void ablation_trend() {
  const fs::path dir = fs::temp_directory_path() / "unirep_acceptance_trend";
  fs::remove_all(dir);
  SweepSpec sweep;
  for (const auto& cell : preset_cells("loss")) {
    if (cell.name == "fine+coarse+cujp" || cell.name == "coarse" || cell.name == "fine") sweep.cells.push_back(cell);
  }
  for (int s = 0; s < kTrendSeeds; ++s) sweep.seeds.push_back(static_cast<std::uint64_t>(s));
  const auto rows = run_ablation(RunConfig{}, sweep, dir);
  const auto means = mean_hos(rows);
  fs::remove_all(dir);
  auto get = [&](const char* k) { return means.count(k) ? means.at(k) : NAN; };
  const double full = get("fine+coarse+cujp"), coarse = get("coarse"), fine = get("fine");
  report(9, full >= coarse && coarse > fine, "ablation trend",
         fmt("mean HOS over 5 seeds: full %.2f, coarse-only %.2f, fine-only %.2f", full, coarse, fine));
}

void threshold_monotonicity() {
  const RunConfig c;
  const Dataset data = dataset_for_split(c, c.eval.split);
  const PretrainResult pre = pretrain(c, data);
  const OpenSetInputs in = prepare_openset(pre.model, data, c, Modality::a);
  double prev_os = INFINITY, prev_unk = -INFINITY;
  bool monotone = true;
  OpenSetScores first, last;
  for (int i = 0; i <= kThetaSteps; ++i) {
    const double theta = static_cast<double>(i) / kThetaSteps;
    const auto s = evaluate_openset(in.probe, in.known_features, in.known_labels, in.unknown_features, theta);
    monotone = monotone && s.os_star <= prev_os && *s.unk >= prev_unk;
    prev_os = s.os_star;
    prev_unk = *s.unk;
    if (i == 0) first = s;
    last = s;
  }
  double macro_closed = 0.0;
  {
    const auto preds = predict(in.probe.logits(in.known_features));
    std::map<std::uint32_t, std::pair<double, double>> per;
    for (std::size_t i = 0; i < preds.size(); ++i) {
      auto& p = per[in.known_labels[i]];
      p.second += 1;
      p.first += in.probe.classes[preds[i].class_index] == in.known_labels[i];
    }
    for (const auto& [label, p] : per) macro_closed += 100.0 * p.first / p.second;
    macro_closed /= static_cast<double>(per.size());
  }
  const bool endpoints = *first.unk == 0.0 && std::abs(first.os_star - macro_closed) < 1e-9 && last.os_star == 0.0 &&
                         *last.unk == 100.0;
  report(10, monotone && endpoints, "threshold monotonicity",
         fmt("%g theta steps; theta=0: OS* %.2f UNK %.0f; ", kThetaSteps + 1, first.os_star, *first.unk) +
             fmt("theta=1: OS* %.0f UNK %.0f", last.os_star, *last.unk));
}

}  // namespace

int main() {
  hos_arithmetic();
  gradient_suite();
  infonce_oracle();
  quantization_oracle();
  ema_convergence();
  permutation_combinatorics();
  determinism();
  learnability();
  ablation_trend();
  threshold_monotonicity();
  std::printf("%d of 10 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
