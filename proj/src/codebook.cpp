#include "unirep/codebook.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "unirep/errors.hpp"

namespace unirep {

namespace {

void validate_ema(double gamma, double epsilon) {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("codebook.gamma must lie in [0, 1)", "codebook.gamma");
  if (!(epsilon > 0.0)) throw ConfigError("codebook.epsilon must be > 0", "codebook.epsilon");
}

}  // namespace

Codebook::Codebook(std::size_t size, std::size_t dim, double gamma, double epsilon)
    : codewords_({size, dim}),
      cluster_size_(size, 1.0),
      ema_sum_({size, dim}),
      idle_(size, 0),
      gamma_(gamma),
      epsilon_(epsilon) {
  if (size == 0) throw ConfigError("codebook must have at least one codeword", "codebook.size");
  if (dim == 0) throw ConfigError("codeword dimension must be positive", "model.dim");
  validate_ema(gamma, epsilon);
}

Codebook Codebook::from_codewords(Tensor codewords, double gamma, double epsilon) {
  if (codewords.rank() != 2) throw DimensionError("codewords must be [H x D], got " + shape_str(codewords.shape()));
  Codebook cb(codewords.dim(0), codewords.dim(1), gamma, epsilon);
  cb.ema_sum_ = codewords;
  cb.codewords_ = std::move(codewords);
  return cb;
}

Codebook Codebook::from_state(Tensor codewords, std::vector<double> cluster_size, Tensor ema_sum, double gamma,
                              double epsilon, std::int64_t steps) {
  Codebook cb = from_codewords(std::move(codewords), gamma, epsilon);
  require_same_shape(cb.codewords_, ema_sum, "codebook state");
  if (cluster_size.size() != cb.size()) throw DimensionError("cluster size vector does not match codebook size");
  cb.cluster_size_ = std::move(cluster_size);
  cb.ema_sum_ = std::move(ema_sum);
  cb.steps_ = steps;
  return cb;
}

void Codebook::init_from_samples(Rng& rng, const Tensor& samples, double noise) {
  if (samples.cols() != dim() || samples.rows() == 0) {
    throw DimensionError("codebook init: samples " + shape_str(samples.shape()) + " vs dimension " +
                         std::to_string(dim()));
  }
  const std::size_t n = samples.rows();
  std::vector<double> best(n, std::numeric_limits<double>::infinity());
  std::size_t pick = static_cast<std::size_t>(rng.uniform_int(n));
  for (std::size_t l = 0; l < size(); ++l) {
    if (l > 0) {
      // D^2 sampling against the codewords chosen so far.
      double total = 0.0;
      for (double b : best) total += b;
      if (total > 0.0) {
        double u = rng.uniform() * total;
        pick = n - 1;
        for (std::size_t i = 0; i < n; ++i) {
          if (u < best[i]) {
            pick = i;
            break;
          }
          u -= best[i];
        }
      } else {
        pick = static_cast<std::size_t>(rng.uniform_int(n));
      }
    }
    auto src = samples.row(pick);
    auto dst = codewords_.row(l);
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] = static_cast<float>(src[k] + noise * rng.normal());
    for (std::size_t i = 0; i < n; ++i) best[i] = std::min(best[i], squared_distance(samples.row(i), dst));
  }
  ema_sum_ = codewords_;
  std::fill(cluster_size_.begin(), cluster_size_.end(), 1.0);
  std::fill(idle_.begin(), idle_.end(), 0);
}

QuantizationResult Codebook::quantize(const Tensor& z) const {
  if (size() == 0) throw ConfigError("cannot quantize with an empty codebook", "codebook.size");
  if (z.rank() < 1 || z.cols() != dim()) {
    throw DimensionError("quantize: input " + shape_str(z.shape()) + " does not end in " + std::to_string(dim()));
  }
  QuantizationResult r;
  const std::size_t rows = z.rows();
  r.indices.resize(rows);
  r.distances.resize(rows);
  r.quantized = Tensor(z.shape());
  for (std::size_t i = 0; i < rows; ++i) {
    auto v = z.row(i);
    std::uint32_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t l = 0; l < size(); ++l) {
      const double d = squared_distance(v, codewords_.row(l));
      if (d < best_d) {
        best_d = d;
        best = static_cast<std::uint32_t>(l);
      }
    }
    r.indices[i] = best;
    r.distances[i] = best_d;
    auto src = codewords_.row(best);
    std::copy(src.begin(), src.end(), r.quantized.row(i).begin());
  }
  return r;
}

void Codebook::ema_update(const Tensor& z, std::span<const std::uint32_t> assignments) {
  if (z.cols() != dim() || z.rows() != assignments.size()) {
    throw DimensionError("ema_update: " + std::to_string(assignments.size()) + " assignments for input " +
                         shape_str(z.shape()));
  }
  const std::size_t H = size(), D = dim();
  std::vector<double> counts(H, 0.0);
  std::vector<double> sums(H * D, 0.0);
  for (std::size_t i = 0; i < assignments.size(); ++i) {
    const std::uint32_t l = assignments[i];
    if (l >= H) throw DataError("assignment " + std::to_string(l) + " outside codebook of size " + std::to_string(H));
    counts[l] += 1.0;
    auto v = z.row(i);
    for (std::size_t k = 0; k < D; ++k) sums[l * D + k] += v[k];
  }
  double total = 0.0;
  for (std::size_t l = 0; l < H; ++l) {
    cluster_size_[l] = gamma_ * cluster_size_[l] + (1.0 - gamma_) * counts[l];
    total += cluster_size_[l];
    idle_[l] = counts[l] > 0.0 ? 0 : idle_[l] + 1;
  }
  const double denom = total + static_cast<double>(H) * epsilon_;
  for (std::size_t l = 0; l < H; ++l) {
    const double smoothed = (cluster_size_[l] + epsilon_) / denom * total;
    auto m = ema_sum_.row(l);
    auto e = codewords_.row(l);
    for (std::size_t k = 0; k < D; ++k) {
      const double mk = gamma_ * static_cast<double>(m[k]) + (1.0 - gamma_) * sums[l * D + k];
      m[k] = static_cast<float>(mk);
      e[k] = static_cast<float>(mk / smoothed);
    }
  }
  ++steps_;
}

std::size_t Codebook::reseed_dead(Rng& rng, const Tensor& samples, std::size_t patience) {
  if (patience == 0 || samples.rows() == 0) return 0;
  if (samples.cols() != dim()) throw DimensionError("reseed_dead: sample width does not match codebook");
  std::size_t reseeded = 0;
  for (std::size_t l = 0; l < size(); ++l) {
    if (idle_[l] < patience) continue;
    auto src = samples.row(static_cast<std::size_t>(rng.uniform_int(samples.rows())));
    std::copy(src.begin(), src.end(), codewords_.row(l).begin());
    std::copy(src.begin(), src.end(), ema_sum_.row(l).begin());
    cluster_size_[l] = 1.0;
    idle_[l] = 0;
    ++reseeded;
  }
  return reseeded;
}

std::uint64_t Codebook::checksum() const {
  std::uint64_t h = unirep::checksum(codewords_);
  h = unirep::checksum(ema_sum_, h);
  const Tensor n({cluster_size_.size()}, std::vector<float>(cluster_size_.begin(), cluster_size_.end()));
  return unirep::checksum(n, h);
}

CommitResult commit_loss(const Tensor& z, const Tensor& quantized) {
  require_same_shape(z, quantized, "commit_loss");
  CommitResult r;
  r.grad = Tensor(z.shape());
  if (z.empty()) return r;
  const double n = static_cast<double>(z.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double d = static_cast<double>(z[i]) - quantized[i];
    acc += d * d;
    r.grad[i] = static_cast<float>(2.0 * d / n);
  }
  r.loss = acc / n;
  return r;
}

Tensor StraightThrough::forward(const Tensor& z, const Tensor& quantized) {
  require_same_shape(z, quantized, "straight_through");
  return quantized;
}

std::vector<std::size_t> usage_counts(std::span<const std::uint32_t> assignments, std::size_t codebook_size) {
  std::vector<std::size_t> counts(codebook_size, 0);
  for (auto l : assignments) {
    if (l >= codebook_size) throw DataError("assignment outside codebook");
    ++counts[l];
  }
  return counts;
}

double perplexity(std::span<const std::size_t> counts) {
  const double total = static_cast<double>(std::accumulate(counts.begin(), counts.end(), std::size_t{0}));
  if (total == 0.0) return 1.0;
  double entropy = 0.0;
  for (auto c : counts) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / total;
    entropy -= p * std::log(p);
  }
  return std::exp(entropy);
}

std::size_t CoactivationTable::count(ShareClass c) const {
  std::size_t n = 0;
  for (const auto& r : rows) n += r.share_class == c ? 1 : 0;
  return n;
}

std::string CoactivationTable::to_csv() const {
  static constexpr const char* kNames[] = {"a", "b", "c", "d", "e", "f", "g", "h"};
  std::ostringstream os;
  os << "codeword_id";
  for (std::size_t m = 0; m < modalities; ++m) {
    os << ",share_" << (m < std::size(kNames) ? kNames[m] : std::to_string(m).c_str());
  }
  os << ",class\n";
  os.precision(6);
  for (const auto& r : rows) {
    os << r.codeword;
    for (double s : r.shares) os << ',' << std::fixed << s;
    os << ',' << r.label << '\n';
  }
  return os.str();
}

CoactivationTable coactivation_stats(const std::vector<std::vector<std::size_t>>& counts, double threshold) {
  if (counts.empty()) throw DataError("coactivation_stats needs at least one modality stream");
  const std::size_t M = counts.size(), H = counts.front().size();
  for (const auto& c : counts) {
    if (c.size() != H) throw DimensionError("coactivation_stats: modality streams cover different codebook sizes");
  }
  CoactivationTable table;
  table.modalities = M;
  table.threshold = threshold;
  table.rows.reserve(H);
  for (std::size_t l = 0; l < H; ++l) {
    CoactivationRow row;
    row.codeword = l;
    row.shares.assign(M, 0.0);
    std::size_t total = 0;
    for (std::size_t m = 0; m < M; ++m) total += counts[m][l];
    if (total > 0) {
      for (std::size_t m = 0; m < M; ++m) {
        row.shares[m] = static_cast<double>(counts[m][l]) / static_cast<double>(total);
        if (row.shares[m] >= threshold) ++row.active_modalities;
      }
    }
    if (row.active_modalities == 0) {
      row.share_class = ShareClass::dead;
      row.label = "dead";
    } else if (row.active_modalities == 1) {
      row.share_class = ShareClass::single;
      row.label = M == 3 ? "cyan" : "single";
    } else if (row.active_modalities == M) {
      row.share_class = ShareClass::all;
      row.label = M == 3 ? "purple" : "shared";
    } else {
      row.share_class = ShareClass::pair;
      row.label = M == 3 ? "orange" : "partial";
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

}  // namespace unirep
