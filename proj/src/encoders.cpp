#include "unirep/encoders.hpp"

#include <cmath>

#include "unirep/errors.hpp"

namespace unirep {

std::string_view modality_name(Modality m) { return m == Modality::a ? "a" : "b"; }

Modality other(Modality m) { return m == Modality::a ? Modality::b : Modality::a; }

Modality parse_modality(std::string_view s) {
  if (s == "a") return Modality::a;
  if (s == "b") return Modality::b;
  throw ConfigError("unknown modality '" + std::string(s) + "'");
}

namespace {

Tensor uniform_tensor(Shape shape, double bound, Rng& rng) {
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = static_cast<float>(rng.uniform(-bound, bound));
  return t;
}

}  // namespace

Mlp::Mlp(MlpRole role, Modality modality, std::size_t in, std::size_t hidden, std::size_t out, Rng& rng)
    : role_(role), modality_(modality) {
  if (in == 0 || hidden == 0 || out == 0) throw ConfigError("mlp dimensions must be positive");
  const double b1 = 1.0 / std::sqrt(static_cast<double>(in));
  const double b2 = 1.0 / std::sqrt(static_cast<double>(hidden));
  w1_ = uniform_tensor({in, hidden}, b1, rng);
  b1_ = uniform_tensor({hidden}, b1, rng);
  w2_ = uniform_tensor({hidden, out}, b2, rng);
  b2_ = uniform_tensor({out}, b2, rng);
}

Mlp Mlp::from_parameters(MlpRole role, Modality modality, Tensor w1, Tensor b1, Tensor w2, Tensor b2) {
  if (w1.rank() != 2 || w2.rank() != 2 || b1.rank() != 1 || b2.rank() != 1 || b1.dim(0) != w1.dim(1) ||
      w2.dim(0) != w1.dim(1) || b2.dim(0) != w2.dim(1)) {
    throw DimensionError("inconsistent mlp parameter shapes " + shape_str(w1.shape()) + " " +
                         shape_str(b1.shape()) + " " + shape_str(w2.shape()) + " " + shape_str(b2.shape()));
  }
  Mlp m;
  m.role_ = role;
  m.modality_ = modality;
  m.w1_ = std::move(w1);
  m.b1_ = std::move(b1);
  m.w2_ = std::move(w2);
  m.b2_ = std::move(b2);
  return m;
}

std::string Mlp::name() const {
  return std::string(role_ == MlpRole::encoder ? "enc_" : "dec_") + std::string(modality_name(modality_));
}

std::size_t Mlp::parameter_count() const { return w1_.size() + b1_.size() + w2_.size() + b2_.size(); }

MlpForward Mlp::forward(const Tensor& x) const {
  if (x.rank() < 2 || x.cols() != in_dim()) {
    throw DimensionError(name() + ": input " + shape_str(x.shape()) + " does not end in " +
                         std::to_string(in_dim()));
  }
  MlpForward f;
  f.cache.input_shape = x.shape();
  f.cache.input = x.as_matrix();
  f.cache.hidden = tanh(add_row_bias(matmul(f.cache.input, w1_), b1_));
  Tensor out = add_row_bias(matmul(f.cache.hidden, w2_), b2_);
  Shape out_shape = x.shape();
  out_shape.back() = out_dim();
  f.output = out.reshaped(std::move(out_shape));
  return f;
}

Tensor Mlp::apply(const Tensor& x) const { return forward(x).output; }

MlpGrads Mlp::zero_grads() const {
  return {Tensor(w1_.shape()), Tensor(b1_.shape()), Tensor(w2_.shape()), Tensor(b2_.shape())};
}

Tensor Mlp::backward(const MlpCache& cache, const Tensor& grad_out, MlpGrads& grads) const {
  if (grad_out.cols() != out_dim() || grad_out.rows() != cache.hidden.rows()) {
    throw DimensionError(name() + ": upstream gradient " + shape_str(grad_out.shape()) + " does not match cache");
  }
  const Tensor g = grad_out.as_matrix();
  add_inplace(grads.w2, matmul_tn(cache.hidden, g));
  add_inplace(grads.b2, column_sums(g));
  Tensor g_pre = matmul_nt(g, w2_);
  for (std::size_t i = 0; i < g_pre.size(); ++i) {
    const float h = cache.hidden[i];
    g_pre[i] *= 1.0f - h * h;
  }
  add_inplace(grads.w1, matmul_tn(cache.input, g_pre));
  add_inplace(grads.b1, column_sums(g_pre));
  return matmul_nt(g_pre, w1_).reshaped(cache.input_shape);
}

std::uint64_t Mlp::checksum() const {
  std::uint64_t h = unirep::checksum(w1_);
  h = unirep::checksum(b1_, h);
  h = unirep::checksum(w2_, h);
  return unirep::checksum(b2_, h);
}

ReconResult reconstruction_loss(const MlpDecoder& dec, const Tensor& e_hat, const Tensor& x) {
  MlpForward f = dec.forward(e_hat);
  require_same_shape(f.output, x, "reconstruction_loss");
  const double n = static_cast<double>(x.size());
  ReconResult r;
  Tensor diff(x.shape());
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = static_cast<double>(f.output[i]) - x[i];
    acc += d * d;
    diff[i] = static_cast<float>(2.0 * d / n);
  }
  r.loss = acc / n;
  r.decoder = dec.zero_grads();
  r.grad_input = dec.backward(f.cache, diff, r.decoder);
  return r;
}

void Adam::step(std::span<const ParamRef> params) {
  for (const auto& p : params) {
    if (p.value == nullptr || p.grad == nullptr) throw TrainingError("adam: unbound parameter " + p.name);
    require_same_shape(*p.value, *p.grad, p.name.c_str());
    if (!all_finite(*p.grad)) throw TrainingError("non-finite gradient for parameter " + p.name);
  }
  ++steps_;
  const double t = static_cast<double>(steps_);
  const double bc1 = 1.0 - std::pow(config_.beta1, t);
  const double bc2 = 1.0 - std::pow(config_.beta2, t);
  for (const auto& p : params) {
    auto& mom = moments_[p.name];
    if (mom.m.size() != p.value->size()) {
      mom.m.assign(p.value->size(), 0.0);
      mom.v.assign(p.value->size(), 0.0);
    }
    auto val = p.value->data();
    auto grad = p.grad->data();
    for (std::size_t i = 0; i < val.size(); ++i) {
      const double g = grad[i];
      mom.m[i] = config_.beta1 * mom.m[i] + (1.0 - config_.beta1) * g;
      mom.v[i] = config_.beta2 * mom.v[i] + (1.0 - config_.beta2) * g * g;
      const double m_hat = mom.m[i] / bc1;
      const double v_hat = mom.v[i] / bc2;
      val[i] = static_cast<float>(val[i] - config_.lr * m_hat / (std::sqrt(v_hat) + config_.eps));
    }
  }
}

std::vector<ParamRef> param_refs(Mlp& mlp, const MlpGrads& grads) {
  const std::string n = mlp.name();
  return {{n + ".w1", &mlp.w1(), &grads.w1},
          {n + ".b1", &mlp.b1(), &grads.b1},
          {n + ".w2", &mlp.w2(), &grads.w2},
          {n + ".b2", &mlp.b2(), &grads.b2}};
}

}  // namespace unirep
