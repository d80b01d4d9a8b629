#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "unirep/rng.hpp"
#include "unirep/tensor.hpp"

namespace unirep {

// n! for n <= 20; ConfigError beyond.
std::uint64_t factorial(std::size_t n);

using Permutation = std::vector<std::uint32_t>;

// A labeled set of distinct orderings of `segments` slots. Label 0 is always
// the identity.
class PermutationUniverse {
 public:
  PermutationUniverse() = default;
  PermutationUniverse(std::size_t segments, std::vector<Permutation> table);

  std::size_t segments() const noexcept { return segments_; }
  std::size_t size() const noexcept { return table_.size(); }
  const Permutation& at(std::size_t label) const { return table_.at(label); }
  const std::vector<Permutation>& table() const noexcept { return table_; }

 private:
  std::size_t segments_ = 0;
  std::vector<Permutation> table_;
};

// Identity plus count-1 distinct non-identity orderings drawn uniformly
// without replacement.
PermutationUniverse build_universe(Rng& rng, std::size_t segments, std::size_t count);

// Default permutation count for a segment count: min(O!, 24).
std::size_t default_permutation_count(std::size_t segments);

// Equal-length boundaries when `parts` divides `length`, otherwise
// floor(k * length / parts).
std::vector<std::size_t> segment_bounds(std::size_t length, std::size_t parts);

struct SegmentSource {
  std::uint32_t modality = 0;  // 0 = a, 1 = b, ...
  std::uint32_t segment = 0;   // segment index within that modality's code
};

struct JigsawInstance {
  Tensor composed;                        // [D] for CUJP, [sum of dims] for MMJP
  std::uint32_t label = 0;                // index into the universe
  std::vector<SegmentSource> provenance;  // per output slot
  std::vector<std::size_t> slot_bounds;   // output slot s spans [bounds[s], bounds[s+1])
};

// Picks modality a or b uniformly for each segment position, then reorders
// the segments by a uniformly drawn permutation from the universe.
// The universe's segment count must divide the code length.
JigsawInstance compose_instance(Rng& rng, const PermutationUniverse& universe, std::span<const float> code_a,
                                std::span<const float> code_b);

// Routes a gradient on the composed vector back to the source codes.
// Returns one tensor per modality with the source code lengths.
std::vector<Tensor> scatter_to_sources(const JigsawInstance& inst, std::span<const float> grad,
                                       std::span<const std::size_t> code_lengths, std::size_t splits_per_modality);

// Size of the MMJP permutation universe, (modalities * splits)!. Throws
// ConfigError naming the factorial bound when it exceeds `cap`.
std::uint64_t mmjp_universe_bound(std::size_t modalities, std::size_t splits, std::uint64_t cap);

// Concatenates every modality's segments and permutes across the full set.
JigsawInstance mmjp_compose(Rng& rng, const PermutationUniverse& universe,
                            const std::vector<std::span<const float>>& codes, std::size_t splits);

// Linear D -> P permutation classifier.
class PermClassifier {
 public:
  PermClassifier() = default;
  PermClassifier(std::size_t input_dim, std::size_t classes, Rng& rng);
  static PermClassifier zeros(std::size_t input_dim, std::size_t classes);
  static PermClassifier from_parameters(Tensor weight, Tensor bias);

  std::size_t input_dim() const { return weight_.dim(0); }
  std::size_t classes() const { return weight_.dim(1); }

  // [B x D] -> [B x P] logits.
  Tensor logits(const Tensor& inputs) const;
  Tensor probabilities(const Tensor& inputs) const;

  Tensor& weight() { return weight_; }
  Tensor& bias() { return bias_; }
  const Tensor& weight() const { return weight_; }
  const Tensor& bias() const { return bias_; }

 private:
  Tensor weight_;  // [D x P]
  Tensor bias_;    // [P]
};

struct CujpLossResult {
  double loss = 0.0;
  Tensor grad_weight;
  Tensor grad_bias;
  Tensor grad_inputs;  // [B x D], one row per instance
};

// Mean cross-entropy between classifier outputs and permutation labels.
CujpLossResult cujp_loss(const PermClassifier& clf, std::span<const JigsawInstance> instances);

Tensor stack_instances(std::span<const JigsawInstance> instances);

}  // namespace unirep
