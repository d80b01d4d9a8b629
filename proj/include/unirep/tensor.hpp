#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace unirep {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

// Dense row-major array of 32-bit reals. Shapes are checked at every public
// boundary; nothing broadcasts implicitly.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, float fill = 0.0f);
  Tensor(Shape shape, std::vector<float> data);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<float> data() noexcept { return data_; }
  std::span<const float> data() const noexcept { return data_; }
  const std::vector<float>& values() const noexcept { return data_; }

  float& operator[](std::size_t i) noexcept { return data_[i]; }
  float operator[](std::size_t i) const noexcept { return data_[i]; }

  float& at(std::size_t i, std::size_t j);
  float at(std::size_t i, std::size_t j) const;
  float& at(std::size_t i, std::size_t j, std::size_t k);
  float at(std::size_t i, std::size_t j, std::size_t k) const;

  // Number of rows when the tensor is viewed as [prod(leading dims) x last dim].
  std::size_t rows() const;
  std::size_t cols() const;
  std::span<float> row(std::size_t r);
  std::span<const float> row(std::size_t r) const;

  Tensor reshaped(Shape shape) const;
  // View as [prod(leading) x last].
  Tensor as_matrix() const;

  void fill(float value);

  bool operator==(const Tensor& other) const = default;

 private:
  Shape shape_;
  std::vector<float> data_;
};

// Throws DimensionError unless the shapes are identical.
void require_same_shape(const Tensor& a, const Tensor& b, const char* what);
// Throws TrainingError naming `what` if any element is NaN or infinite.
void require_finite(const Tensor& t, const std::string& what);
bool all_finite(const Tensor& t);

// [M x K] x [K x N]. Accumulates in double and narrows once.
Tensor matmul(const Tensor& a, const Tensor& b);
// a^T b for a [K x M], b [K x N].
Tensor matmul_tn(const Tensor& a, const Tensor& b);
// a b^T for a [M x K], b [N x K].
Tensor matmul_nt(const Tensor& a, const Tensor& b);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, float factor);
Tensor hadamard(const Tensor& a, const Tensor& b);
void add_inplace(Tensor& dst, const Tensor& src, float factor = 1.0f);

// Adds a length-N bias to every row of an [M x N] matrix.
Tensor add_row_bias(const Tensor& m, const Tensor& bias);
// Sum over rows of an [M x N] matrix, giving length N.
Tensor column_sums(const Tensor& m);
// Mean over axis 1 of an [N x T x D] tensor, giving [N x D].
Tensor mean_over_time(const Tensor& x);

Tensor tanh(const Tensor& a);

double sum(const Tensor& a);
double dot(std::span<const float> a, std::span<const float> b);
double squared_distance(std::span<const float> a, std::span<const float> b);

// Max-shifted log-softmax along `axis`.
Tensor log_softmax(const Tensor& v, std::size_t axis);
Tensor softmax(const Tensor& v, std::size_t axis);

// FNV-1a over the raw bytes of the shape and data.
std::uint64_t checksum(const Tensor& t, std::uint64_t seed = 0xcbf29ce484222325ULL);

}  // namespace unirep
