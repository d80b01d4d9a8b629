#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "unirep/tensor.hpp"

namespace unirep {

struct GenSpec {
  std::size_t n_classes = 8;  // |U|
  std::size_t n_known = 4;    // |V|
  std::size_t samples_per_class = 60;
  std::size_t timesteps = 4;
  std::size_t d_in_a = 24;
  std::size_t d_in_b = 24;
  std::size_t latent_dim = 256;
  double latent_noise = 0.3;  // per-timestep deviation from the class prototype
  double sigma = 0.1;         // observation noise
  double corruption = 0.1;    // fraction of b's timesteps whose latent is replaced by noise
  double pretrain_fraction = 0.4;
  std::uint64_t seed = 0;

  // Throws ConfigError naming the gen.* key at fault.
  void validate() const;
};

enum class Split : std::uint8_t { pretrain, probe_train, probe_val, test_known, test_unknown };
inline constexpr std::array<Split, 5> kAllSplits{Split::pretrain, Split::probe_train, Split::probe_val,
                                                 Split::test_known, Split::test_unknown};

std::string to_string(Split s);
Split parse_split(const std::string& s);

struct ModalBatch {
  Split split = Split::pretrain;
  Tensor x_a;  // [N x T x d_in_a]
  Tensor x_b;  // [N x T x d_in_b]
  std::vector<std::uint32_t> labels;
  std::vector<std::uint32_t> sample_ids;

  std::size_t size() const { return labels.size(); }
  const Tensor& x(bool modality_b) const { return modality_b ? x_b : x_a; }
};

struct ClassPartition {
  std::vector<std::uint32_t> known;
  std::vector<std::uint32_t> unknown;
};

struct Dataset {
  GenSpec spec;
  ClassPartition classes;
  std::array<ModalBatch, 5> splits;

  const ModalBatch& get(Split s) const { return splits[static_cast<std::size_t>(s)]; }
  ModalBatch& get(Split s) { return splits[static_cast<std::size_t>(s)]; }
};

// Seeded paired two-modality data. Sample content depends only on
// (seed, class), so changing n_known re-partitions the downstream splits
// without touching the pretraining split.
Dataset generate(const GenSpec& spec);

// Deterministic seeded partition of the distinct labels into known/unknown.
ClassPartition class_split(std::span<const std::uint32_t> labels, std::size_t n_known, std::uint64_t seed);

enum class SplitPreset { one_to_one, three_to_one };
SplitPreset parse_split_preset(const std::string& s);
std::string to_string(SplitPreset p);
// 1:1 -> n/2 known, 3:1 -> 3n/4 known.
std::size_t known_count(std::size_t n_classes, SplitPreset preset);

// Mantel-style statistic: Pearson correlation between the pairwise distance
// matrices of time-pooled a and b features. High for genuinely paired rows.
double pairing_statistic(const Tensor& x_a, const Tensor& x_b);

// Rows of x selected in the given order.
Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows);
ModalBatch gather(const ModalBatch& batch, std::span<const std::size_t> rows);

}  // namespace unirep
