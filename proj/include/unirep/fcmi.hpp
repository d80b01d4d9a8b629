#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "unirep/encoders.hpp"
#include "unirep/rng.hpp"
#include "unirep/tensor.hpp"

namespace unirep {

enum class MaskMode { aligned, independent };

std::string to_string(MaskMode mode);
MaskMode parse_mask_mode(const std::string& s);

// Feature-dimension masks, one index set per sample and modality. The same
// set applies to every timestep of a sample.
struct MaskPlan {
  double ratio = 0.0;
  MaskMode mode = MaskMode::aligned;
  std::size_t dim = 0;
  std::vector<std::vector<std::size_t>> a;
  std::vector<std::vector<std::size_t>> b;

  const std::vector<std::vector<std::size_t>>& indices(Modality m) const { return m == Modality::a ? a : b; }
  std::size_t samples() const { return a.size(); }
};

// floor(ratio * dim) distinct dimensions per sample, sorted ascending.
MaskPlan make_masks(Rng& rng, std::size_t n_samples, std::size_t dim, double ratio, MaskMode mode);

// Zeroes the listed dimensions of every row of sample i. z is [N x T x D] or [N x D].
Tensor apply_mask(const Tensor& z, const std::vector<std::vector<std::size_t>>& indices);

using ModalityPair = std::pair<Modality, Modality>;

std::vector<ModalityPair> all_modality_pairs();
std::string to_string(const ModalityPair& p);
ModalityPair parse_modality_pair(const std::string& s);

struct ContrastConfig {
  double tau = 1.0;
  std::vector<ModalityPair> pairs = all_modality_pairs();
  // L2-normalize rows before the dot product.
  bool normalize = true;
  bool use_fine = true;
  bool use_coarse = true;

  void validate() const;
};

struct InfoNceResult {
  double loss = 0.0;
  Tensor grad_masked;  // dL/d(masked input), input shape
  Tensor grad_target;  // dL/d(unmasked input), input shape
  // T < 2 (fine) or N < 2 (coarse): loss is identically zero.
  bool degenerate = false;
};

// Per-timestep contrast within each sample; negatives are the other
// timesteps of the same sample. Inputs are [N x T x D].
InfoNceResult fine_loss(const Tensor& masked, const Tensor& target, double tau, bool normalize = false);

// Per-sample contrast across the batch; each sample's timesteps are
// concatenated into one vector. Inputs are [N x ...] with N >= 1.
InfoNceResult coarse_loss(const Tensor& masked, const Tensor& target, double tau, bool normalize = false);

struct PairTerm {
  ModalityPair pair;
  double fine = 0.0;
  double coarse = 0.0;
};

struct FcmiResult {
  double fine = 0.0;    // summed over pairs
  double coarse = 0.0;  // summed over pairs
  double total = 0.0;
  Tensor grad_a;
  Tensor grad_b;
  std::vector<PairTerm> terms;
};

// Sums fine and coarse InfoNCE over the configured ordered pairs (m, n): the
// m side is masked with the plan, the n side is left intact. Gradients are
// with respect to the unmasked latents z_a, z_b ([N x T x D]).
FcmiResult fcmi_total(const Tensor& z_a, const Tensor& z_b, const MaskPlan& plan, const ContrastConfig& config);

}  // namespace unirep
