#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "unirep/encoders.hpp"
#include "unirep/fcmi.hpp"
#include "unirep/synthdata.hpp"

namespace unirep {

enum class JigsawMode { cujp, mmjp, off };
std::string to_string(JigsawMode m);
JigsawMode parse_jigsaw_mode(const std::string& s);

enum class FeatureSource { continuous, quantized };
// How a [T x D] latent sequence becomes one probe input: mean over time, or all timesteps concatenated.
enum class Pooling { mean, concat };
// Per-feature treatment before the probe: none, unit L2 norm per sample, or z-scoring with source-train statistics.
enum class FeatureNorm { none, l2, standardize };

struct ModelConfig {
  std::size_t dim = 256;  // unified latent width D
  std::size_t hidden = 0;  // 0 -> 2 * dim
  std::size_t hidden_dim() const { return hidden == 0 ? 2 * dim : hidden; }
};

struct CodebookConfig {
  std::size_t size = 400;
  double gamma = 0.99;
  double epsilon = 1e-5;
  double init_noise = 0.01;
  std::size_t reseed_after = 0;  // 0 disables dead-codeword reseeding
};

struct CujpConfig {
  JigsawMode mode = JigsawMode::cujp;
  std::size_t segments = 4;
  std::size_t permutations = 0;  // 0 -> min(segments!, 24)
  std::size_t mmjp_splits = 3;   // per modality
  std::uint64_t mmjp_cap = 40320;
  std::size_t instances_per_sample = 1;
};

struct LossWeights {
  double fcmi = 1.0;    // lambda_1, on L_fine + L_coarse
  double cujp = 2.0;    // lambda_2
  double recon = 1.0;   // lambda_3
  double commit = 1.0;  // lambda_4
  void validate() const;
};

struct TrainConfig {
  std::size_t epochs = 5;
  std::size_t batch_size = 16;
  AdamConfig adam{};
  LossWeights weights{};
};

struct EvalConfig {
  std::size_t probe_epochs = 50;
  std::size_t probe_batch = 16;
  double probe_lr = 0.1;
  double reject_percentile = 5.0;
  FeatureSource features = FeatureSource::continuous;
  Pooling pooling = Pooling::concat;
  FeatureNorm feature_norm = FeatureNorm::standardize;
  std::vector<std::size_t> recall_k{1, 5, 10};
  Modality source = Modality::a;
  SplitPreset split = SplitPreset::one_to_one;
};

struct RunConfig {
  std::uint64_t seed = 0;
  GenSpec gen{};  // gen.seed and gen.latent_dim are derived (seed, model.dim)
  ModelConfig model{};
  ContrastConfig fcmi{};
  double mask_ratio = 0.3;
  MaskMode mask_mode = MaskMode::aligned;
  CodebookConfig codebook{};
  CujpConfig cujp{};
  TrainConfig train{};
  EvalConfig eval{};

  // GenSpec with the derived fields filled in.
  GenSpec gen_spec() const;
  std::size_t permutation_count() const;

  void validate() const;

  // Nested JSON with every key materialized.
  nlohmann::json to_json() const;
  // Accepts nested objects and/or dotted keys; unknown keys raise ConfigError.
  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig load(const std::string& path);
  void save(const std::string& path) const;

  // Applies a single dotted-key override, e.g. ("fcmi.tau", 0.5).
  RunConfig with(const std::string& key, const nlohmann::json& value) const;
};

// Every recognised dotted key.
std::vector<std::string> config_keys();

// {"a": {"b": 1}} -> {"a.b": 1}; arrays are leaves.
nlohmann::json flatten_json(const nlohmann::json& j);

}  // namespace unirep
