#include "unirep/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <sstream>

#include "unirep/errors.hpp"

namespace unirep {

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

Tensor::Tensor(Shape shape, float fill) : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<float> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_numel(shape_) != data_.size()) {
    throw DimensionError("tensor shape " + shape_str(shape_) + " does not match " +
                         std::to_string(data_.size()) + " elements");
  }
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " + shape_str(shape_));
  }
  return shape_[axis];
}

float& Tensor::at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
float Tensor::at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }
float& Tensor::at(std::size_t i, std::size_t j, std::size_t k) {
  return data_[(i * shape_[1] + j) * shape_[2] + k];
}
float Tensor::at(std::size_t i, std::size_t j, std::size_t k) const {
  return data_[(i * shape_[1] + j) * shape_[2] + k];
}

std::size_t Tensor::cols() const { return shape_.empty() ? 0 : shape_.back(); }

std::size_t Tensor::rows() const {
  if (shape_.empty()) return 0;
  const std::size_t c = shape_.back();
  return c == 0 ? 0 : data_.size() / c;
}

std::span<float> Tensor::row(std::size_t r) {
  const std::size_t c = cols();
  return std::span<float>(data_).subspan(r * c, c);
}

std::span<const float> Tensor::row(std::size_t r) const {
  const std::size_t c = cols();
  return std::span<const float>(data_).subspan(r * c, c);
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_numel(shape) != data_.size()) {
    throw DimensionError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
  }
  return Tensor(std::move(shape), data_);
}

Tensor Tensor::as_matrix() const { return reshaped({rows(), cols()}); }

void Tensor::fill(float value) { std::fill(data_.begin(), data_.end(), value); }

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(what) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

bool all_finite(const Tensor& t) {
  return std::all_of(t.data().begin(), t.data().end(), [](float v) { return std::isfinite(v); });
}

void require_finite(const Tensor& t, const std::string& what) {
  if (!all_finite(t)) throw TrainingError("non-finite values in " + what);
}

namespace {

void require_matrix(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected a matrix, got shape " + shape_str(t.shape()));
  }
}

Tensor narrow(const Shape& shape, const std::vector<double>& acc) {
  std::vector<float> out(acc.size());
  for (std::size_t i = 0; i < acc.size(); ++i) out[i] = static_cast<float>(acc[i]);
  return Tensor(shape, std::move(out));
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul: inner dimensions differ for " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
  }
  std::vector<double> acc(m * n, 0.0);
  const float* pa = a.data().data();
  const float* pb = b.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    double* out = acc.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = pa[i * k + p];
      if (av == 0.0) continue;
      const float* brow = pb + p * n;
      for (std::size_t j = 0; j < n; ++j) out[j] += av * brow[j];
    }
  }
  return narrow({m, n}, acc);
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul_tn");
  require_matrix(b, "matmul_tn");
  const std::size_t k = a.dim(0), m = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul_tn: leading dimensions differ for " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  }
  std::vector<double> acc(m * n, 0.0);
  const float* pa = a.data().data();
  const float* pb = b.data().data();
  for (std::size_t p = 0; p < k; ++p) {
    const float* arow = pa + p * m;
    const float* brow = pb + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double av = arow[i];
      if (av == 0.0) continue;
      double* out = acc.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) out[j] += av * brow[j];
    }
  }
  return narrow({m, n}, acc);
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul_nt");
  require_matrix(b, "matmul_nt");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
  if (b.dim(1) != k) {
    throw DimensionError("matmul_nt: trailing dimensions differ for " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  }
  std::vector<double> acc(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) acc[i * n + j] = dot(a.row(i), b.row(j));
  }
  return narrow({m, n}, acc);
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b[i];
  return out;
}

Tensor scale(const Tensor& a, float factor) {
  Tensor out = a;
  for (auto& v : out.data()) v *= factor;
  return out;
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "hadamard");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b[i];
  return out;
}

void add_inplace(Tensor& dst, const Tensor& src, float factor) {
  require_same_shape(dst, src, "add_inplace");
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += factor * src[i];
}

Tensor add_row_bias(const Tensor& m, const Tensor& bias) {
  require_matrix(m, "add_row_bias");
  if (bias.rank() != 1 || bias.dim(0) != m.dim(1)) {
    throw DimensionError("add_row_bias: bias " + shape_str(bias.shape()) + " does not fit " +
                         shape_str(m.shape()));
  }
  Tensor out = m;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    for (std::size_t j = 0; j < row.size(); ++j) row[j] += bias[j];
  }
  return out;
}

Tensor column_sums(const Tensor& m) {
  require_matrix(m, "column_sums");
  std::vector<double> acc(m.dim(1), 0.0);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    for (std::size_t j = 0; j < row.size(); ++j) acc[j] += row[j];
  }
  return narrow({m.dim(1)}, acc);
}

Tensor mean_over_time(const Tensor& x) {
  if (x.rank() != 3) throw DimensionError("mean_over_time: expected [N x T x D], got " + shape_str(x.shape()));
  const std::size_t n = x.dim(0), t = x.dim(1), d = x.dim(2);
  std::vector<double> acc(n * d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t s = 0; s < t; ++s)
      for (std::size_t k = 0; k < d; ++k) acc[i * d + k] += x.at(i, s, k);
  if (t > 0)
    for (auto& v : acc) v /= static_cast<double>(t);
  return narrow({n, d}, acc);
}

Tensor tanh(const Tensor& a) {
  Tensor out = a;
  for (auto& v : out.data()) v = static_cast<float>(std::tanh(static_cast<double>(v)));
  return out;
}

double sum(const Tensor& a) {
  double s = 0.0;
  for (float v : a.data()) s += v;
  return s;
}

double dot(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) {
    throw DimensionError("dot: lengths " + std::to_string(a.size()) + " and " + std::to_string(b.size()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * b[i];
  return s;
}

double squared_distance(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) {
    throw DimensionError("squared_distance: lengths " + std::to_string(a.size()) + " and " +
                         std::to_string(b.size()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    s += d * d;
  }
  return s;
}

namespace {

template <typename Fn>
Tensor along_axis(const Tensor& v, std::size_t axis, Fn&& fn) {
  if (axis >= v.rank()) {
    throw DimensionError("axis " + std::to_string(axis) + " invalid for shape " + shape_str(v.shape()));
  }
  const auto& s = v.shape();
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t len = s[axis];
  Tensor out(s);
  std::vector<double> buf(len);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      for (std::size_t k = 0; k < len; ++k) buf[k] = v[base + k * inner];
      fn(buf);
      for (std::size_t k = 0; k < len; ++k) out[base + k * inner] = static_cast<float>(buf[k]);
    }
  }
  return out;
}

void log_softmax_inplace(std::vector<double>& buf) {
  if (buf.empty()) return;
  const double mx = *std::max_element(buf.begin(), buf.end());
  double acc = 0.0;
  for (double x : buf) acc += std::exp(x - mx);
  const double lse = mx + std::log(acc);
  for (double& x : buf) x -= lse;
}

}  // namespace

Tensor log_softmax(const Tensor& v, std::size_t axis) {
  return along_axis(v, axis, [](std::vector<double>& buf) { log_softmax_inplace(buf); });
}

Tensor softmax(const Tensor& v, std::size_t axis) {
  return along_axis(v, axis, [](std::vector<double>& buf) {
    log_softmax_inplace(buf);
    for (double& x : buf) x = std::exp(x);
  });
}

std::uint64_t checksum(const Tensor& t, std::uint64_t seed) {
  std::uint64_t h = seed;
  auto mix = [&h](const void* p, std::size_t n) {
    const auto* bytes = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (auto d : t.shape()) {
    const std::uint64_t d64 = d;
    mix(&d64, sizeof d64);
  }
  mix(t.data().data(), t.size() * sizeof(float));
  return h;
}

}  // namespace unirep
