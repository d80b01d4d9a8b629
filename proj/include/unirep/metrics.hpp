#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "unirep/tensor.hpp"

namespace unirep {

// Harmonic mean of OS* and UNK; 0 when both are 0.
double harmonic_open_set(double os_star, double unk);

// One classified test sample: argmax over known classes and the log of the
// max-softmax confidence. Keeping the log lets confidences that round to 1.0
// in double still compare strictly below a threshold of 1.
struct Prediction {
  std::uint32_t class_index = 0;  // index into the known-class list
  double log_confidence = 0.0;
};

std::vector<Prediction> predict(const Tensor& logits);

struct ClassAccuracy {
  std::uint32_t label = 0;
  std::size_t samples = 0;
  std::size_t correct = 0;  // correct and not rejected
  double accuracy = 0.0;    // percent
};

struct OpenSetScores {
  double os_star = 0.0;  // macro accuracy over known classes, percent
  std::optional<double> unk;
  std::optional<double> hos;
  double closed_set_accuracy = 0.0;  // known samples, argmax only, no rejection, percent
  std::vector<ClassAccuracy> per_class;
};

// A known-split sample counts as correct when its argmax matches and its
// confidence is not below theta. An unknown-split sample counts as rejected
// when its confidence is below theta. Empty unknown set leaves UNK and HOS unset.
OpenSetScores score_open_set(std::span<const Prediction> known_preds, std::span<const std::uint32_t> known_labels,
                             std::span<const std::uint32_t> known_classes,
                             std::span<const Prediction> unknown_preds, double theta);

// Linear-interpolated percentile (0..100) of the values.
double percentile(std::vector<double> values, double pct);

struct RecallAtK {
  std::size_t k = 0;
  double a_to_b = 0.0;  // percent
  double b_to_a = 0.0;  // percent
};

// Cosine-similarity retrieval between paired rows of `a` and `b` ([M x D]).
// A query's rank counts corpus items with strictly higher similarity than its
// true pair. K larger than M is a ConfigError.
std::vector<RecallAtK> recall_at_k(const Tensor& a, const Tensor& b, std::span<const std::size_t> ks);

}  // namespace unirep
