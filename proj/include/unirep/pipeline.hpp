#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "unirep/codebook.hpp"
#include "unirep/config.hpp"
#include "unirep/cujp.hpp"
#include "unirep/encoders.hpp"
#include "unirep/metrics.hpp"
#include "unirep/synthdata.hpp"

namespace unirep {

struct Model {
  Mlp enc_a, enc_b, dec_a, dec_b;
  Codebook codebook;
  PermutationUniverse universe;
  PermClassifier classifier;
  bool codebook_ready = false;

  const Mlp& encoder(Modality m) const { return m == Modality::a ? enc_a : enc_b; }
  const Mlp& decoder(Modality m) const { return m == Modality::a ? dec_a : dec_b; }
  // Covers every parameter a downstream task must leave untouched.
  std::uint64_t frozen_checksum() const;
};

// Seeded initialisation of all pretraining parameters for the given config.
Model make_model(const RunConfig& config, std::size_t d_in_a, std::size_t d_in_b);

// Unweighted loss terms plus the weighted total. Terms whose weight is zero
// are skipped and reported as 0.
struct StepLosses {
  double fine = 0.0;
  double coarse = 0.0;
  double cujp = 0.0;
  double recon = 0.0;
  double commit = 0.0;
  double total = 0.0;
};

struct ModelGrads {
  MlpGrads enc_a, enc_b, dec_a, dec_b;
  Tensor clf_weight, clf_bias;
};

struct StepOutcome {
  StepLosses losses;
  ModelGrads grads;
  Tensor z_a, z_b;  // encoder outputs [N x T x D]
  QuantizationResult q_a, q_b;
};

struct EpochLog {
  std::size_t epoch = 0;
  StepLosses mean;
  double perplexity = 1.0;
  nlohmann::json to_json() const;
};

class Trainer {
 public:
  Trainer(RunConfig config, std::size_t d_in_a, std::size_t d_in_b);
  Trainer(RunConfig config, Model model);

  // Seeds the codebook from this batch's encoder outputs if it has not been seeded.
  void ensure_codebook(const Tensor& x_a, const Tensor& x_b);

  // Losses and gradients for one minibatch. Reads the model only; draws masks
  // and jigsaw instances from `rng`.
  StepOutcome compute(const Tensor& x_a, const Tensor& x_b, Rng& rng) const;

  // compute, then EMA codebook update and one Adam step.
  StepLosses step(const Tensor& x_a, const Tensor& x_b);

  EpochLog run_epoch(const ModalBatch& data);

  const Model& model() const noexcept { return model_; }
  Model& model() noexcept { return model_; }
  const RunConfig& config() const noexcept { return config_; }
  Rng& rng() noexcept { return rng_; }
  std::size_t epochs_run() const noexcept { return epochs_; }

 private:
  RunConfig config_;
  Model model_;
  Adam adam_;
  Rng rng_;
  std::size_t epochs_ = 0;
  std::vector<std::uint32_t> epoch_assignments_;
};

struct PretrainResult {
  Model model;
  std::vector<EpochLog> log;
};

PretrainResult pretrain(const RunConfig& config, const Dataset& data);

// Per-sample encoder features for a modality, continuous or quantized:
// [N x D] for mean pooling, [N x T*D] for concatenation.
Tensor pooled_features(const Model& model, Modality m, const Tensor& x, FeatureSource source,
                       Pooling pooling = Pooling::mean);

struct FeatureScaler {
  FeatureNorm norm = FeatureNorm::none;
  std::vector<double> mean, scale;  // standardize only
  void apply(Tensor& features) const;
};

// Statistics come from `features` (the source training set) and are reused for every other set.
FeatureScaler fit_scaler(const Tensor& features, FeatureNorm norm);

// Linear head over the known classes only.
struct ProbeHead {
  Tensor weight;  // [D x C]
  Tensor bias;    // [C]
  std::vector<std::uint32_t> classes;

  Tensor logits(const Tensor& features) const;
};

struct ProbeOptions {
  std::size_t epochs = 50;
  std::size_t batch = 16;
  double lr = 0.1;
};

// Cross-entropy training of a linear head on fixed features. Labels outside
// `known_classes` raise DataError.
ProbeHead train_probe(const Tensor& features, std::span<const std::uint32_t> labels,
                      std::span<const std::uint32_t> known_classes, const ProbeOptions& options, Rng& rng);

// Same, on the time-pooled outputs of a frozen encoder.
ProbeHead train_probe(const Mlp& frozen_encoder, const ModalBatch& probe_data, Modality m,
                      std::span<const std::uint32_t> known_classes, const ProbeOptions& options, Rng& rng);

// Percentile of the confidences of correctly classified validation samples;
// 0 (never reject) when nothing is classified correctly.
double calibrate_threshold(const ProbeHead& probe, const Tensor& features, std::span<const std::uint32_t> labels,
                           double pct);

OpenSetScores evaluate_openset(const ProbeHead& probe, const Tensor& known_features,
                               std::span<const std::uint32_t> known_labels, const Tensor& unknown_features,
                               double theta);

struct EvalReport {
  Modality source = Modality::a;
  Modality target = Modality::b;
  std::string source_encoder;
  std::string target_encoder;
  SplitPreset split = SplitPreset::one_to_one;
  std::uint64_t seed = 0;
  std::vector<std::uint32_t> known_classes;
  std::vector<std::uint32_t> unknown_classes;
  double theta = 0.0;
  OpenSetScores scores;
  std::vector<RecallAtK> recall;
  double perplexity = 1.0;
  std::size_t codewords_shared = 0;
  std::size_t codewords_single = 0;
  std::size_t codewords_dead = 0;

  nlohmann::json to_json() const;
  static std::string csv_header();
  std::string csv_row() const;
};

// Everything the open-set scoring needs: a probe trained on the source
// modality, its calibrated threshold, and scaled target-modality test features.
struct OpenSetInputs {
  ProbeHead probe;
  double theta = 0.0;
  Tensor known_features;
  std::vector<std::uint32_t> known_labels;
  Tensor unknown_features;
};

OpenSetInputs prepare_openset(const Model& model, const Dataset& data, const RunConfig& config, Modality source);

// Probe on the source modality, calibrate on source validation data, test on
// the target modality. `data` must carry the class partition to evaluate.
EvalReport run_downstream(const Model& model, const Dataset& data, const RunConfig& config, Modality source);

// Regenerates the dataset with the class partition for `preset`.
Dataset dataset_for_split(const RunConfig& config, SplitPreset preset);

struct PipelineResult {
  PretrainResult pretrain;
  EvalReport report;
};

// generate -> pretrain -> downstream evaluation with the config's eval settings.
PipelineResult run_pipeline(const RunConfig& config);

}  // namespace unirep
