#include "unirep/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "unirep/errors.hpp"
#include "unirep/rng.hpp"

namespace unirep {

void GenSpec::validate() const {
  if (n_classes < 2) throw ConfigError("gen.n_classes must be at least 2", "gen.n_classes");
  if (n_known < 1 || n_known >= n_classes) {
    throw ConfigError("gen.n_known must satisfy 1 <= n_known < n_classes (got " + std::to_string(n_known) + " of " +
                          std::to_string(n_classes) + ")",
                      "gen.n_known");
  }
  if (samples_per_class < 4) throw ConfigError("gen.samples_per_class must be at least 4", "gen.samples_per_class");
  if (timesteps < 1) throw ConfigError("gen.timesteps must be positive", "gen.timesteps");
  if (d_in_a < 1) throw ConfigError("gen.d_in_a must be positive", "gen.d_in_a");
  if (d_in_b < 1) throw ConfigError("gen.d_in_b must be positive", "gen.d_in_b");
  if (latent_dim < 1) throw ConfigError("gen.latent_dim must be positive", "gen.latent_dim");
  if (!(latent_noise >= 0.0)) throw ConfigError("gen.latent_noise must be >= 0", "gen.latent_noise");
  if (!(sigma >= 0.0)) throw ConfigError("gen.sigma must be >= 0", "gen.sigma");
  if (!(corruption >= 0.0 && corruption < 1.0)) throw ConfigError("gen.corruption must lie in [0, 1)", "gen.corruption");
  if (!(pretrain_fraction > 0.0 && pretrain_fraction < 1.0)) {
    throw ConfigError("gen.pretrain_fraction must lie in (0, 1)", "gen.pretrain_fraction");
  }
  const auto n_pre = static_cast<std::size_t>(std::llround(pretrain_fraction * static_cast<double>(samples_per_class)));
  if (n_pre == 0 || samples_per_class - n_pre < 3) {
    throw ConfigError("gen.pretrain_fraction leaves too few downstream samples per class", "gen.pretrain_fraction");
  }
}

std::string to_string(Split s) {
  switch (s) {
    case Split::pretrain: return "pretrain";
    case Split::probe_train: return "probe_train";
    case Split::probe_val: return "probe_val";
    case Split::test_known: return "test_known";
    case Split::test_unknown: return "test_unknown";
  }
  return "?";
}

Split parse_split(const std::string& s) {
  for (auto sp : kAllSplits) {
    if (to_string(sp) == s) return sp;
  }
  throw DataError("unknown split '" + s + "'");
}

SplitPreset parse_split_preset(const std::string& s) {
  if (s == "split1" || s == "1:1") return SplitPreset::one_to_one;
  if (s == "split2" || s == "3:1") return SplitPreset::three_to_one;
  throw ConfigError("split preset must be split1 (1:1) or split2 (3:1), got '" + s + "'", "eval.split");
}

std::string to_string(SplitPreset p) { return p == SplitPreset::one_to_one ? "split1" : "split2"; }

std::size_t known_count(std::size_t n_classes, SplitPreset preset) {
  return preset == SplitPreset::one_to_one ? n_classes / 2 : 3 * n_classes / 4;
}

ClassPartition class_split(std::span<const std::uint32_t> labels, std::size_t n_known, std::uint64_t seed) {
  std::set<std::uint32_t> distinct(labels.begin(), labels.end());
  if (n_known < 1 || n_known >= distinct.size()) {
    throw ConfigError("need 1 <= known classes < " + std::to_string(distinct.size()) + " distinct labels, got " +
                          std::to_string(n_known),
                      "gen.n_known");
  }
  std::vector<std::uint32_t> order(distinct.begin(), distinct.end());
  Rng rng = Rng(seed).derive(0x5eed'c1a5ULL);
  rng.shuffle(std::span<std::uint32_t>(order));
  ClassPartition p;
  p.known.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_known));
  p.unknown.assign(order.begin() + static_cast<std::ptrdiff_t>(n_known), order.end());
  std::sort(p.known.begin(), p.known.end());
  std::sort(p.unknown.begin(), p.unknown.end());
  return p;
}

namespace {

constexpr std::uint64_t kMapStreamA = 0xa11ce;
constexpr std::uint64_t kMapStreamB = 0xb0b;
constexpr std::uint64_t kClassStreamBase = 0xc1a55000;

Tensor random_map(Rng rng, std::size_t rows, std::size_t cols) {
  Tensor m({rows, cols});
  const double sd = 1.0 / std::sqrt(static_cast<double>(cols));
  for (auto& v : m.data()) v = static_cast<float>(rng.normal(0.0, sd));
  return m;
}

void observe(const Tensor& map, const std::vector<double>& latent, double sigma, Rng& rng, float* out) {
  const std::size_t rows = map.dim(0), cols = map.dim(1);
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) s += static_cast<double>(map.at(r, c)) * latent[c];
    out[r] = static_cast<float>(std::tanh(s) + sigma * rng.normal());
  }
}

struct ClassSamples {
  std::vector<float> a, b;  // [n x T x d]
};

ClassSamples generate_class(const GenSpec& spec, std::uint32_t cls, const Tensor& map_a, const Tensor& map_b) {
  Rng rng = Rng(spec.seed).derive(kClassStreamBase + cls);
  const std::size_t T = spec.timesteps, L = spec.latent_dim, n = spec.samples_per_class;
  std::vector<double> proto(T * L);
  for (auto& v : proto) v = rng.normal();

  ClassSamples out;
  out.a.resize(n * T * spec.d_in_a);
  out.b.resize(n * T * spec.d_in_b);
  std::vector<double> latent(L), latent_b(L);
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t k = 0; k < L; ++k) latent[k] = proto[t * L + k] + spec.latent_noise * rng.normal();
      latent_b = latent;
      if (spec.corruption > 0.0 && rng.uniform() < spec.corruption) {
        for (auto& v : latent_b) v = rng.normal();
      }
      observe(map_a, latent, spec.sigma, rng, out.a.data() + (s * T + t) * spec.d_in_a);
      observe(map_b, latent_b, spec.sigma, rng, out.b.data() + (s * T + t) * spec.d_in_b);
    }
  }
  return out;
}

}  // namespace

Dataset generate(const GenSpec& spec) {
  spec.validate();
  const Rng root(spec.seed);
  const Tensor map_a = random_map(root.derive(kMapStreamA), spec.d_in_a, spec.latent_dim);
  const Tensor map_b = random_map(root.derive(kMapStreamB), spec.d_in_b, spec.latent_dim);

  std::vector<std::uint32_t> all_labels(spec.n_classes);
  for (std::uint32_t c = 0; c < spec.n_classes; ++c) all_labels[c] = c;

  Dataset ds;
  ds.spec = spec;
  ds.classes = class_split(all_labels, spec.n_known, spec.seed);
  const std::set<std::uint32_t> known(ds.classes.known.begin(), ds.classes.known.end());

  const std::size_t T = spec.timesteps, n = spec.samples_per_class;
  const auto n_pre = static_cast<std::size_t>(std::llround(spec.pretrain_fraction * static_cast<double>(n)));
  const std::size_t rest = n - n_pre;
  const std::size_t n_val = std::max<std::size_t>(1, rest / 6);
  const std::size_t n_test = (rest - n_val) / 2;

  std::array<std::vector<float>, 5> xa, xb;
  for (std::uint32_t c = 0; c < spec.n_classes; ++c) {
    const ClassSamples cs = generate_class(spec, c, map_a, map_b);
    const bool is_known = known.count(c) > 0;
    for (std::size_t s = 0; s < n; ++s) {
      Split target;
      if (s < n_pre) {
        target = Split::pretrain;
      } else if (!is_known) {
        target = Split::test_unknown;
      } else {
        const std::size_t r = s - n_pre;
        target = r < n_val ? Split::probe_val : (r < n_val + n_test ? Split::test_known : Split::probe_train);
      }
      const auto k = static_cast<std::size_t>(target);
      const std::size_t sa = T * spec.d_in_a, sb = T * spec.d_in_b;
      xa[k].insert(xa[k].end(), cs.a.begin() + static_cast<std::ptrdiff_t>(s * sa),
                   cs.a.begin() + static_cast<std::ptrdiff_t>((s + 1) * sa));
      xb[k].insert(xb[k].end(), cs.b.begin() + static_cast<std::ptrdiff_t>(s * sb),
                   cs.b.begin() + static_cast<std::ptrdiff_t>((s + 1) * sb));
      ds.splits[k].labels.push_back(c);
      ds.splits[k].sample_ids.push_back(static_cast<std::uint32_t>(c * n + s));
    }
  }
  for (auto sp : kAllSplits) {
    const auto k = static_cast<std::size_t>(sp);
    auto& b = ds.splits[k];
    b.split = sp;
    const std::size_t count = b.labels.size();
    b.x_a = Tensor({count, T, spec.d_in_a}, std::move(xa[k]));
    b.x_b = Tensor({count, T, spec.d_in_b}, std::move(xb[k]));
  }
  return ds;
}

double pairing_statistic(const Tensor& x_a, const Tensor& x_b) {
  if (x_a.rank() != 3 || x_b.rank() != 3 || x_a.dim(0) != x_b.dim(0)) {
    throw DimensionError("pairing_statistic: expected paired [N x T x D] tensors");
  }
  const Tensor pa = mean_over_time(x_a), pb = mean_over_time(x_b);
  const std::size_t n = pa.dim(0);
  std::vector<double> da, db;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      da.push_back(std::sqrt(squared_distance(pa.row(i), pa.row(j))));
      db.push_back(std::sqrt(squared_distance(pb.row(i), pb.row(j))));
    }
  }
  if (da.size() < 2) return 0.0;
  const double m = static_cast<double>(da.size());
  double ma = 0, mb = 0;
  for (std::size_t k = 0; k < da.size(); ++k) {
    ma += da[k];
    mb += db[k];
  }
  ma /= m;
  mb /= m;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t k = 0; k < da.size(); ++k) {
    sab += (da[k] - ma) * (db[k] - mb);
    saa += (da[k] - ma) * (da[k] - ma);
    sbb += (db[k] - mb) * (db[k] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows) {
  if (x.rank() < 1) throw DimensionError("gather_rows on a scalar");
  const std::size_t per = x.dim(0) == 0 ? 0 : x.size() / x.dim(0);
  Shape shape = x.shape();
  shape[0] = rows.size();
  Tensor out(shape);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= x.dim(0)) throw DimensionError("gather_rows: row index out of range");
    std::copy_n(x.data().begin() + static_cast<std::ptrdiff_t>(rows[i] * per), per,
                out.data().begin() + static_cast<std::ptrdiff_t>(i * per));
  }
  return out;
}

ModalBatch gather(const ModalBatch& batch, std::span<const std::size_t> rows) {
  ModalBatch out;
  out.split = batch.split;
  out.x_a = gather_rows(batch.x_a, rows);
  out.x_b = gather_rows(batch.x_b, rows);
  for (auto r : rows) {
    out.labels.push_back(batch.labels.at(r));
    out.sample_ids.push_back(batch.sample_ids.at(r));
  }
  return out;
}

}  // namespace unirep
