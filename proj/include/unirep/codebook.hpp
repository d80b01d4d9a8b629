#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "unirep/rng.hpp"
#include "unirep/tensor.hpp"

namespace unirep {

struct QuantizationResult {
  std::vector<std::uint32_t> indices;  // one per row of z
  Tensor quantized;                    // same shape as z; rows are codeword copies
  std::vector<double> distances;       // squared L2 to the chosen codeword
};

// Shared dictionary E [H x D] re-estimated by exponential moving averages of
// the vectors assigned to each codeword.
class Codebook {
 public:
  Codebook() = default;
  // Codewords start at zero with unit pseudo-counts; call init_from_samples
  // (or use from_codewords) before quantizing real data.
  Codebook(std::size_t size, std::size_t dim, double gamma = 0.99, double epsilon = 1e-5);
  // Each codeword counts as one prior observation: N_l = 1, m_l = e_l.
  static Codebook from_codewords(Tensor codewords, double gamma = 0.99, double epsilon = 1e-5);
  static Codebook from_state(Tensor codewords, std::vector<double> cluster_size, Tensor ema_sum, double gamma,
                             double epsilon, std::int64_t steps);

  std::size_t size() const { return codewords_.empty() ? 0 : codewords_.dim(0); }
  std::size_t dim() const { return codewords_.empty() ? 0 : codewords_.dim(1); }
  double gamma() const noexcept { return gamma_; }
  double epsilon() const noexcept { return epsilon_; }
  std::int64_t steps() const noexcept { return steps_; }

  const Tensor& codewords() const noexcept { return codewords_; }
  const std::vector<double>& cluster_size() const noexcept { return cluster_size_; }
  const Tensor& ema_sum() const noexcept { return ema_sum_; }
  std::span<const float> codeword(std::size_t l) const { return codewords_.row(l); }

  // k-means++ seeding from the rows of `samples`, plus Gaussian noise of the
  // given scale. Resets the EMA state to one pseudo-observation per codeword.
  void init_from_samples(Rng& rng, const Tensor& samples, double noise);

  // Nearest codeword per row of z ([..., D]); ties go to the lowest index.
  QuantizationResult quantize(const Tensor& z) const;

  // N_l <- g N_l + (1-g) count_l;  m_l <- g m_l + (1-g) sum z;  e_l <- m_l / N~_l
  // with Laplace-smoothed N~_l.
  void ema_update(const Tensor& z, std::span<const std::uint32_t> assignments);

  // Replaces codewords that have gone `patience` consecutive updates without
  // an assignment by random rows of `samples`. Returns how many were reseeded.
  std::size_t reseed_dead(Rng& rng, const Tensor& samples, std::size_t patience);
  const std::vector<std::size_t>& idle_steps() const noexcept { return idle_; }

  std::uint64_t checksum() const;

 private:
  Tensor codewords_;
  std::vector<double> cluster_size_;
  Tensor ema_sum_;
  std::vector<std::size_t> idle_;
  double gamma_ = 0.99;
  double epsilon_ = 1e-5;
  std::int64_t steps_ = 0;
};

struct CommitResult {
  double loss = 0.0;
  Tensor grad;  // w.r.t. z only; the codeword side is a constant
};

// Mean squared error between z and stop-gradient(quantized).
CommitResult commit_loss(const Tensor& z, const Tensor& quantized);

// Forward returns the quantized values; backward hands the incoming gradient
// to the pre-quantization input unchanged.
struct StraightThrough {
  static Tensor forward(const Tensor& z, const Tensor& quantized);
  static Tensor backward(const Tensor& grad_quantized) { return grad_quantized; }
};

std::vector<std::size_t> usage_counts(std::span<const std::uint32_t> assignments, std::size_t codebook_size);
// exp(entropy) of the empirical assignment distribution; 1 for no usage.
double perplexity(std::span<const std::size_t> counts);

enum class ShareClass { dead, single, pair, all };

struct CoactivationRow {
  std::size_t codeword = 0;
  std::vector<double> shares;  // per modality, sums to 1 unless dead
  std::size_t active_modalities = 0;
  ShareClass share_class = ShareClass::dead;
  std::string label;  // "dead", "single", "shared" (2 modalities); "cyan"/"orange"/"purple" (3)
};

struct CoactivationTable {
  std::size_t modalities = 0;
  std::vector<CoactivationRow> rows;
  double threshold = 0.10;

  std::size_t count(ShareClass c) const;
  // codeword_id,share_a,share_b,...,class
  std::string to_csv() const;
};

// counts[m][l]: how often modality m was quantized to codeword l. A modality
// is active on a codeword when its share reaches `threshold`.
CoactivationTable coactivation_stats(const std::vector<std::vector<std::size_t>>& counts, double threshold = 0.10);

}  // namespace unirep
