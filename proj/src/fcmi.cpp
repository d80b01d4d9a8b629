#include "unirep/fcmi.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "unirep/errors.hpp"

namespace unirep {

std::string to_string(MaskMode mode) { return mode == MaskMode::aligned ? "aligned" : "independent"; }

MaskMode parse_mask_mode(const std::string& s) {
  if (s == "aligned") return MaskMode::aligned;
  if (s == "independent") return MaskMode::independent;
  throw ConfigError("fcmi.mask_mode must be 'aligned' or 'independent', got '" + s + "'", "fcmi.mask_mode");
}

namespace {

std::vector<std::size_t> draw_indices(Rng& rng, std::size_t dim, std::size_t count) {
  std::vector<std::size_t> pool(dim);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  // Partial Fisher-Yates: the first `count` slots become a uniform subset.
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.uniform_int(dim - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(count);
  std::sort(pool.begin(), pool.end());
  return pool;
}

}  // namespace

MaskPlan make_masks(Rng& rng, std::size_t n_samples, std::size_t dim, double ratio, MaskMode mode) {
  if (!(ratio >= 0.0 && ratio < 1.0)) {
    throw ConfigError("mask ratio must lie in [0, 1), got " + std::to_string(ratio), "fcmi.mask_ratio");
  }
  MaskPlan plan;
  plan.ratio = ratio;
  plan.mode = mode;
  plan.dim = dim;
  const auto count = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(dim)));
  plan.a.reserve(n_samples);
  plan.b.reserve(n_samples);
  for (std::size_t i = 0; i < n_samples; ++i) {
    plan.a.push_back(draw_indices(rng, dim, count));
    plan.b.push_back(mode == MaskMode::aligned ? plan.a.back() : draw_indices(rng, dim, count));
  }
  return plan;
}

Tensor apply_mask(const Tensor& z, const std::vector<std::vector<std::size_t>>& indices) {
  if (z.rank() < 2 || z.dim(0) != indices.size()) {
    throw DimensionError("apply_mask: tensor " + shape_str(z.shape()) + " vs " + std::to_string(indices.size()) +
                         " mask rows");
  }
  Tensor out = z;
  const std::size_t d = z.cols();
  const std::size_t per_sample = z.size() / z.dim(0);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    for (std::size_t off = 0; off < per_sample; off += d) {
      for (auto k : indices[i]) {
        if (k >= d) throw DimensionError("mask index " + std::to_string(k) + " >= " + std::to_string(d));
        out[i * per_sample + off + k] = 0.0f;
      }
    }
  }
  return out;
}

std::vector<ModalityPair> all_modality_pairs() {
  return {{Modality::a, Modality::a}, {Modality::a, Modality::b}, {Modality::b, Modality::a}, {Modality::b, Modality::b}};
}

std::string to_string(const ModalityPair& p) {
  return std::string(modality_name(p.first)) + std::string(modality_name(p.second));
}

ModalityPair parse_modality_pair(const std::string& s) {
  if (s.size() != 2) throw ConfigError("modality pair must look like 'ab', got '" + s + "'", "fcmi.pairs");
  try {
    return {parse_modality(s.substr(0, 1)), parse_modality(s.substr(1, 1))};
  } catch (const ConfigError&) {
    throw ConfigError("modality pair must look like 'ab', got '" + s + "'", "fcmi.pairs");
  }
}

void ContrastConfig::validate() const {
  if (!(tau > 0.0) || !std::isfinite(tau)) throw ConfigError("fcmi.tau must be > 0", "fcmi.tau");
  if (pairs.empty()) throw ConfigError("fcmi.pairs must not be empty", "fcmi.pairs");
}

namespace {

constexpr double kNormDelta = 1e-12;

// Rows of float data promoted to double, optionally L2-normalized. Keeps the
// smoothed norms so the backward pass can undo the normalization.
struct Rows {
  std::size_t count = 0, width = 0;
  std::vector<double> raw, used, norms;
};

Rows load_rows(const float* src, std::size_t count, std::size_t width, bool normalize) {
  Rows r;
  r.count = count;
  r.width = width;
  r.raw.assign(src, src + count * width);
  r.used = r.raw;
  if (normalize) {
    r.norms.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
      double ss = 0.0;
      for (std::size_t k = 0; k < width; ++k) ss += r.raw[i * width + k] * r.raw[i * width + k];
      r.norms[i] = std::sqrt(ss + kNormDelta);
      for (std::size_t k = 0; k < width; ++k) r.used[i * width + k] /= r.norms[i];
    }
  }
  return r;
}

// Maps a gradient w.r.t. the (possibly normalized) rows back to the raw rows.
void unnormalize_grad(const Rows& r, std::vector<double>& g) {
  if (r.norms.empty()) return;
  for (std::size_t i = 0; i < r.count; ++i) {
    const double s = r.norms[i];
    double gq = 0.0;
    for (std::size_t k = 0; k < r.width; ++k) gq += g[i * r.width + k] * r.raw[i * r.width + k];
    for (std::size_t k = 0; k < r.width; ++k) {
      g[i * r.width + k] = g[i * r.width + k] / s - r.raw[i * r.width + k] * gq / (s * s * s);
    }
  }
}

// -(1/R) sum_r log softmax_c(q_r . k_c / tau)[r], with gradients scaled by `weight`.
double info_nce_block(const Rows& q, const Rows& k, double tau, double weight, std::vector<double>& gq,
                      std::vector<double>& gk) {
  const std::size_t R = q.count, W = q.width;
  std::vector<double> logits(R * R);
  for (std::size_t r = 0; r < R; ++r) {
    for (std::size_t c = 0; c < R; ++c) {
      double s = 0.0;
      for (std::size_t d = 0; d < W; ++d) s += q.used[r * W + d] * k.used[c * W + d];
      logits[r * R + c] = s / tau;
    }
  }
  double loss = 0.0;
  std::vector<double> dlogits(R * R);
  for (std::size_t r = 0; r < R; ++r) {
    const double* row = logits.data() + r * R;
    const double mx = *std::max_element(row, row + R);
    double acc = 0.0;
    for (std::size_t c = 0; c < R; ++c) acc += std::exp(row[c] - mx);
    const double lse = mx + std::log(acc);
    loss += lse - row[r];
    for (std::size_t c = 0; c < R; ++c) {
      dlogits[r * R + c] = (std::exp(row[c] - lse) - (c == r ? 1.0 : 0.0)) * weight / (static_cast<double>(R) * tau);
    }
  }
  gq.assign(R * W, 0.0);
  gk.assign(R * W, 0.0);
  for (std::size_t r = 0; r < R; ++r) {
    for (std::size_t c = 0; c < R; ++c) {
      const double g = dlogits[r * R + c];
      if (g == 0.0) continue;
      for (std::size_t d = 0; d < W; ++d) {
        gq[r * W + d] += g * k.used[c * W + d];
        gk[c * W + d] += g * q.used[r * W + d];
      }
    }
  }
  unnormalize_grad(q, gq);
  unnormalize_grad(k, gk);
  return weight * loss / static_cast<double>(R);
}

void store(std::vector<double> const& src, float* dst) {
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = static_cast<float>(src[i]);
}

}  // namespace

InfoNceResult fine_loss(const Tensor& masked, const Tensor& target, double tau, bool normalize) {
  require_same_shape(masked, target, "fine_loss");
  if (masked.rank() != 3) throw DimensionError("fine_loss: expected [N x T x D], got " + shape_str(masked.shape()));
  if (!(tau > 0.0)) throw ConfigError("temperature must be > 0", "fcmi.tau");
  const std::size_t N = masked.dim(0), T = masked.dim(1), D = masked.dim(2);
  InfoNceResult r;
  r.grad_masked = Tensor(masked.shape());
  r.grad_target = Tensor(masked.shape());
  r.degenerate = T < 2;
  if (N == 0) return r;
  std::vector<double> gq, gk;
  const double weight = 1.0 / static_cast<double>(N);
  for (std::size_t i = 0; i < N; ++i) {
    const std::size_t off = i * T * D;
    Rows q = load_rows(masked.data().data() + off, T, D, normalize);
    Rows k = load_rows(target.data().data() + off, T, D, normalize);
    r.loss += info_nce_block(q, k, tau, weight, gq, gk);
    store(gq, r.grad_masked.data().data() + off);
    store(gk, r.grad_target.data().data() + off);
  }
  if (r.degenerate) r.loss = 0.0;
  return r;
}

InfoNceResult coarse_loss(const Tensor& masked, const Tensor& target, double tau, bool normalize) {
  require_same_shape(masked, target, "coarse_loss");
  if (masked.rank() < 2) throw DimensionError("coarse_loss: expected [N x ...], got " + shape_str(masked.shape()));
  if (!(tau > 0.0)) throw ConfigError("temperature must be > 0", "fcmi.tau");
  const std::size_t N = masked.dim(0);
  InfoNceResult r;
  r.grad_masked = Tensor(masked.shape());
  r.grad_target = Tensor(masked.shape());
  r.degenerate = N < 2;
  if (N == 0) return r;
  const std::size_t W = masked.size() / N;
  Rows q = load_rows(masked.data().data(), N, W, normalize);
  Rows k = load_rows(target.data().data(), N, W, normalize);
  std::vector<double> gq, gk;
  r.loss = info_nce_block(q, k, tau, 1.0, gq, gk);
  store(gq, r.grad_masked.data().data());
  store(gk, r.grad_target.data().data());
  if (r.degenerate) r.loss = 0.0;
  return r;
}

FcmiResult fcmi_total(const Tensor& z_a, const Tensor& z_b, const MaskPlan& plan, const ContrastConfig& config) {
  config.validate();
  require_same_shape(z_a, z_b, "fcmi_total");
  if (z_a.rank() != 3) throw DimensionError("fcmi_total: expected [N x T x D], got " + shape_str(z_a.shape()));
  if (plan.samples() != z_a.dim(0)) {
    throw DimensionError("fcmi_total: mask plan covers " + std::to_string(plan.samples()) + " samples, batch has " +
                         std::to_string(z_a.dim(0)));
  }
  FcmiResult out;
  out.grad_a = Tensor(z_a.shape());
  out.grad_b = Tensor(z_b.shape());
  const Tensor masked_a = apply_mask(z_a, plan.a);
  const Tensor masked_b = apply_mask(z_b, plan.b);
  auto latent = [&](Modality m) -> const Tensor& { return m == Modality::a ? z_a : z_b; };
  auto masked = [&](Modality m) -> const Tensor& { return m == Modality::a ? masked_a : masked_b; };
  auto grad = [&](Modality m) -> Tensor& { return m == Modality::a ? out.grad_a : out.grad_b; };

  for (const auto& pair : config.pairs) {
    const auto [m, n] = pair;
    PairTerm term{pair, 0.0, 0.0};
    auto accumulate = [&](const InfoNceResult& res) {
      // The masked side only receives gradient on surviving dimensions.
      add_inplace(grad(m), apply_mask(res.grad_masked, plan.indices(m)));
      add_inplace(grad(n), res.grad_target);
    };
    if (config.use_fine) {
      auto res = fine_loss(masked(m), latent(n), config.tau, config.normalize);
      term.fine = res.loss;
      accumulate(res);
    }
    if (config.use_coarse) {
      auto res = coarse_loss(masked(m), latent(n), config.tau, config.normalize);
      term.coarse = res.loss;
      accumulate(res);
    }
    out.fine += term.fine;
    out.coarse += term.coarse;
    out.terms.push_back(term);
  }
  out.total = out.fine + out.coarse;
  return out;
}

}  // namespace unirep
