#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "blpnet/random.hpp"

namespace blpnet {

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NonFiniteError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string to_string(const Shape& shape);

/// Dense row-major N-dimensional array. Feature maps are rank 3 in
/// [height, width, channels] order, so the channels of one pixel are
/// contiguous and a map reshapes directly into a (pixels x channels) matrix.
template <typename Scalar>
class Tensor {
 public:
  using value_type = Scalar;
  using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using MatrixMap = Eigen::Map<RowMatrix>;
  using ConstMatrixMap = Eigen::Map<const RowMatrix>;
  using VectorMap = Eigen::Map<Vector>;
  using ConstVectorMap = Eigen::Map<const Vector>;

  Tensor() : Tensor(Shape{1}) {}
  explicit Tensor(Shape shape, Scalar fill = Scalar(0));
  Tensor(Shape shape, std::vector<Scalar> data);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const { return data_.size(); }

  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }
  std::span<Scalar> values() { return data_; }
  std::span<const Scalar> values() const { return data_; }

  Scalar& operator[](std::size_t i) { return data_[i]; }
  const Scalar& operator[](std::size_t i) const { return data_[i]; }

  // Rank-3 element access.
  Scalar& at(std::size_t y, std::size_t x, std::size_t c) {
    return data_[(y * shape_[1] + x) * shape_[2] + c];
  }
  const Scalar& at(std::size_t y, std::size_t x, std::size_t c) const {
    return data_[(y * shape_[1] + x) * shape_[2] + c];
  }

  MatrixMap matrix(std::size_t rows, std::size_t cols);
  ConstMatrixMap matrix(std::size_t rows, std::size_t cols) const;
  VectorMap vector() { return VectorMap(data_.data(), static_cast<Eigen::Index>(data_.size())); }
  ConstVectorMap vector() const {
    return ConstVectorMap(data_.data(), static_cast<Eigen::Index>(data_.size()));
  }

  Tensor reshaped(Shape shape) const;
  void fill(Scalar v) { std::fill(data_.begin(), data_.end(), v); }

  template <typename Other>
  Tensor<Other> cast() const {
    std::vector<Other> out(data_.begin(), data_.end());
    return Tensor<Other>(shape_, std::move(out));
  }

  bool operator==(const Tensor& other) const = default;

 private:
  Shape shape_;
  std::vector<Scalar> data_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

/// Weights are [kh, kw, in_channels, out_channels]; bias is [out_channels].
template <typename Scalar>
struct ConvKernel {
  Tensor<Scalar> weights;
  Tensor<Scalar> bias;

  static ConvKernel zeros(std::size_t kh, std::size_t kw, std::size_t in, std::size_t out) {
    return {Tensor<Scalar>({kh, kw, in, out}), Tensor<Scalar>({out})};
  }
  std::size_t kh() const { return weights.dim(0); }
  std::size_t kw() const { return weights.dim(1); }
  std::size_t in_channels() const { return weights.dim(2); }
  std::size_t out_channels() const { return weights.dim(3); }
  std::size_t parameter_count() const { return (kh() * kw() * in_channels() + 1) * out_channels(); }
};

template <typename Scalar>
struct ConvGradients {
  Tensor<Scalar> input;
  Tensor<Scalar> weights;
  Tensor<Scalar> bias;
};

template <typename Scalar>
struct DenseGradients {
  Tensor<Scalar> input;
  Tensor<Scalar> weights;
  Tensor<Scalar> bias;
};

template <typename Scalar>
struct PoolResult {
  Tensor<Scalar> output;
  // Flat input index of the winning element, one per output element.
  std::vector<std::uint32_t> argmax;
};

template <typename Scalar>
struct DropoutResult {
  Tensor<Scalar> output;
  // Per-element multiplier: 0 for dropped, 1/(1-rate) for kept, 1 at inference.
  Tensor<Scalar> mask;
};

// Stride-1 valid convolution.
template <typename Scalar>
Tensor<Scalar> conv2d(const Tensor<Scalar>& input, const ConvKernel<Scalar>& kernel);

template <typename Scalar>
ConvGradients<Scalar> conv2d_backward(const Tensor<Scalar>& input, const ConvKernel<Scalar>& kernel,
                                      const Tensor<Scalar>& grad_out);

// Non-overlapping 2x2 windows; a trailing odd row/column is dropped.
template <typename Scalar>
PoolResult<Scalar> maxpool2(const Tensor<Scalar>& input);

template <typename Scalar>
Tensor<Scalar> maxpool2_backward(const Shape& input_shape, std::span<const std::uint32_t> argmax,
                                 const Tensor<Scalar>& grad_out);

template <typename Scalar>
Tensor<Scalar> dense(const Tensor<Scalar>& input, const Tensor<Scalar>& weights, const Tensor<Scalar>& bias);

template <typename Scalar>
DenseGradients<Scalar> dense_backward(const Tensor<Scalar>& input, const Tensor<Scalar>& weights,
                                      const Tensor<Scalar>& grad_out);

template <typename Scalar>
Tensor<Scalar> relu(const Tensor<Scalar>& t);

template <typename Scalar>
Tensor<Scalar> relu_backward(const Tensor<Scalar>& input, const Tensor<Scalar>& grad_out);

template <typename Scalar>
Tensor<Scalar> softmax(const Tensor<Scalar>& t);

// Takes the softmax *output* and the gradient with respect to it.
template <typename Scalar>
Tensor<Scalar> softmax_backward(const Tensor<Scalar>& output, const Tensor<Scalar>& grad_out);

template <typename Scalar>
Tensor<Scalar> global_avg_pool(const Tensor<Scalar>& input);

template <typename Scalar>
Tensor<Scalar> global_avg_pool_backward(const Shape& input_shape, const Tensor<Scalar>& grad_out);

template <typename Scalar>
Tensor<Scalar> flatten(const Tensor<Scalar>& t) {
  return t.reshaped({t.size()});
}

template <typename Scalar>
DropoutResult<Scalar> dropout(const Tensor<Scalar>& t, double rate, Rng& rng, bool training);

template <typename Scalar>
Tensor<Scalar> dropout_backward(const Tensor<Scalar>& mask, const Tensor<Scalar>& grad_out);

template <typename Scalar>
bool all_finite(const Tensor<Scalar>& t);

}  // namespace blpnet
