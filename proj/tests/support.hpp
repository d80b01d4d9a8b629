#pragma once

#include <algorithm>
#include <cmath>
#include <functional>

#include "unirep/config.hpp"
#include "unirep/encoders.hpp"
#include "unirep/rng.hpp"
#include "unirep/tensor.hpp"

namespace testing {

inline unirep::Tensor random_tensor(unirep::Rng& rng, unirep::Shape shape, double scale = 1.0) {
  unirep::Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<float>(scale * rng.normal());
  return t;
}

// Central differences of `loss` with respect to every element of `x`, using
// the float-representable step actually taken as the denominator.
inline std::vector<double> numeric_grad(const std::function<double()>& loss, unirep::Tensor& x, double h = 1e-3) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const float orig = x[i];
    const float up = static_cast<float>(orig + h), down = static_cast<float>(orig - h);
    x[i] = up;
    const double lp = loss();
    x[i] = down;
    const double lm = loss();
    x[i] = orig;
    g[i] = (lp - lm) / (static_cast<double>(up) - static_cast<double>(down));
  }
  return g;
}

// max |numeric - analytic| / max(|numeric|_inf, |analytic|_inf, 1e-6)
inline double grad_error(const std::vector<double>& numeric, const unirep::Tensor& analytic) {
  double diff = 0.0, scale = 1e-6;
  for (std::size_t i = 0; i < numeric.size(); ++i) {
    diff = std::max(diff, std::abs(numeric[i] - analytic[i]));
    scale = std::max({scale, std::abs(numeric[i]), std::abs(static_cast<double>(analytic[i]))});
  }
  return diff / scale;
}

inline double check_grad(const std::function<double()>& loss, unirep::Tensor& x, const unirep::Tensor& analytic,
                         double h = 1e-3) {
  return grad_error(numeric_grad(loss, x, h), analytic);
}

// Same loss as reconstruction_loss, evaluated in double end to end.
inline double recon_loss_double(const unirep::Mlp& dec, const unirep::Tensor& e, const unirep::Tensor& x) {
  const std::size_t R = e.rows(), in = dec.in_dim(), H = dec.hidden_dim(), out = dec.out_dim();
  double acc = 0.0;
  std::vector<double> h(H);
  for (std::size_t r = 0; r < R; ++r) {
    const auto row = e.row(r);
    for (std::size_t j = 0; j < H; ++j) {
      double s = dec.b1()[j];
      for (std::size_t k = 0; k < in; ++k) s += static_cast<double>(row[k]) * dec.w1().at(k, j);
      h[j] = std::tanh(s);
    }
    for (std::size_t o = 0; o < out; ++o) {
      double s = dec.b2()[o];
      for (std::size_t j = 0; j < H; ++j) s += h[j] * dec.w2().at(j, o);
      const double d = s - x.row(r)[o];
      acc += d * d;
    }
  }
  return acc / static_cast<double>(x.size());
}

// Small but complete run configuration for fast pipeline tests.
inline unirep::RunConfig tiny_config(std::uint64_t seed = 7) {
  auto c = unirep::RunConfig{}
               .with("seed", seed)
               .with("model.dim", 16)
               .with("gen.samples_per_class", 20)
               .with("gen.d_in_a", 8)
               .with("gen.d_in_b", 8)
               .with("codebook.size", 32)
               .with("train.epochs", 1)
               .with("eval.probe_epochs", 5);
  return c;
}

}  // namespace testing
