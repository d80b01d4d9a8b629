#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "unirep/rng.hpp"
#include "unirep/tensor.hpp"

namespace unirep {

enum class Modality : std::uint8_t { a = 0, b = 1 };

std::string_view modality_name(Modality m);
Modality other(Modality m);
Modality parse_modality(std::string_view s);

enum class MlpRole : std::uint8_t { encoder, decoder };

struct MlpGrads {
  Tensor w1, b1, w2, b2;
};

// Activations kept by a forward pass for the matching backward pass.
struct MlpCache {
  Tensor input;   // [R x in]
  Tensor hidden;  // [R x hidden], post-tanh
  Shape input_shape;
};

struct MlpForward {
  Tensor output;
  MlpCache cache;
};

// Two-layer perceptron in -> hidden (tanh) -> out, applied independently to
// every row (every timestep). Serves as the per-modality encoder and as the
// reconstruction decoder.
class Mlp {
 public:
  Mlp() = default;
  // Uniform init in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
  Mlp(MlpRole role, Modality modality, std::size_t in, std::size_t hidden, std::size_t out, Rng& rng);
  static Mlp from_parameters(MlpRole role, Modality modality, Tensor w1, Tensor b1, Tensor w2, Tensor b2);

  MlpRole role() const noexcept { return role_; }
  Modality modality() const noexcept { return modality_; }
  // "enc_a", "dec_b", ...
  std::string name() const;

  std::size_t in_dim() const { return w1_.dim(0); }
  std::size_t hidden_dim() const { return w1_.dim(1); }
  std::size_t out_dim() const { return w2_.dim(1); }
  std::size_t parameter_count() const;

  // x has shape [..., in]; output has shape [..., out].
  MlpForward forward(const Tensor& x) const;
  Tensor apply(const Tensor& x) const;
  // Accumulates parameter gradients into `grads` and returns dL/dx in the input shape.
  Tensor backward(const MlpCache& cache, const Tensor& grad_out, MlpGrads& grads) const;

  MlpGrads zero_grads() const;

  const Tensor& w1() const { return w1_; }
  const Tensor& b1() const { return b1_; }
  const Tensor& w2() const { return w2_; }
  const Tensor& b2() const { return b2_; }
  Tensor& w1() { return w1_; }
  Tensor& b1() { return b1_; }
  Tensor& w2() { return w2_; }
  Tensor& b2() { return b2_; }

  std::uint64_t checksum() const;

 private:
  MlpRole role_ = MlpRole::encoder;
  Modality modality_ = Modality::a;
  Tensor w1_, b1_, w2_, b2_;
};

using MlpEncoder = Mlp;
using MlpDecoder = Mlp;

// Per-timestep encoding z = enc(x).
inline MlpForward encode(const MlpEncoder& enc, const Tensor& x) { return enc.forward(x); }

struct ReconResult {
  double loss = 0.0;
  Tensor grad_input;  // dL/de_hat, same shape as e_hat
  MlpGrads decoder;
};

// Mean squared error between dec(e_hat) and x over all elements.
ReconResult reconstruction_loss(const MlpDecoder& dec, const Tensor& e_hat, const Tensor& x);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct ParamRef {
  std::string name;
  Tensor* value;
  const Tensor* grad;
};

// Adam with bias correction. Moments are keyed by parameter name and created
// lazily with the parameter's shape.
class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}

  // All gradients are validated before any parameter moves; a non-finite
  // gradient throws TrainingError naming the parameter.
  void step(std::span<const ParamRef> params);

  std::int64_t steps() const noexcept { return steps_; }
  const AdamConfig& config() const noexcept { return config_; }

 private:
  struct Moments {
    std::vector<double> m, v;
  };
  AdamConfig config_;
  std::int64_t steps_ = 0;
  std::map<std::string, Moments> moments_;
};

// Binds an Mlp's parameters to a gradient set under the Mlp's name.
std::vector<ParamRef> param_refs(Mlp& mlp, const MlpGrads& grads);

}  // namespace unirep
