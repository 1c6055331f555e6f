#include "blpnet/tensor.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

namespace blpnet {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

namespace {

void check_dims(const Shape& shape) {
  if (shape.empty()) throw ShapeError("tensor rank must be at least 1");
  for (auto d : shape)
    if (d == 0) throw ShapeError("tensor dimension must be positive: " + to_string(shape));
}

void require_rank(const Shape& shape, std::size_t rank, const char* op) {
  if (shape.size() != rank)
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " + to_string(shape));
}

}  // namespace

template <typename Scalar>
Tensor<Scalar>::Tensor(Shape shape, Scalar fill) : shape_(std::move(shape)) {
  check_dims(shape_);
  data_.assign(shape_size(shape_), fill);
}

template <typename Scalar>
Tensor<Scalar>::Tensor(Shape shape, std::vector<Scalar> data) : shape_(std::move(shape)), data_(std::move(data)) {
  check_dims(shape_);
  if (data_.size() != shape_size(shape_))
    throw ShapeError("data length " + std::to_string(data_.size()) + " does not match shape " + to_string(shape_));
}

template <typename Scalar>
typename Tensor<Scalar>::MatrixMap Tensor<Scalar>::matrix(std::size_t rows, std::size_t cols) {
  if (rows * cols != data_.size()) throw ShapeError("matrix view does not cover tensor " + to_string(shape_));
  return MatrixMap(data_.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

template <typename Scalar>
typename Tensor<Scalar>::ConstMatrixMap Tensor<Scalar>::matrix(std::size_t rows, std::size_t cols) const {
  if (rows * cols != data_.size()) throw ShapeError("matrix view does not cover tensor " + to_string(shape_));
  return ConstMatrixMap(data_.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::reshaped(Shape shape) const {
  if (shape_size(shape) != data_.size())
    throw ShapeError("cannot reshape " + to_string(shape_) + " to " + to_string(shape));
  return Tensor(std::move(shape), data_);
}

namespace {

template <typename Scalar>
void check_conv(const Tensor<Scalar>& input, const ConvKernel<Scalar>& k) {
  require_rank(input.shape(), 3, "conv2d");
  require_rank(k.weights.shape(), 4, "conv2d kernel");
  if (k.bias.size() != k.out_channels()) throw ShapeError("conv2d: bias length does not match out_channels");
  if (k.in_channels() != input.dim(2))
    throw ShapeError("conv2d: kernel expects " + std::to_string(k.in_channels()) + " channels, input has " +
                     std::to_string(input.dim(2)));
  if (input.dim(0) < k.kh() || input.dim(1) < k.kw())
    throw ShapeError("conv2d: input " + to_string(input.shape()) + " smaller than kernel");
}

// Rows are output positions, columns are the (i, j, channel) receptive field.
template <typename Scalar>
typename Tensor<Scalar>::RowMatrix im2col(const Tensor<Scalar>& input, std::size_t kh, std::size_t kw) {
  const std::size_t w = input.dim(1), c = input.dim(2);
  const std::size_t oh = input.dim(0) - kh + 1, ow = w - kw + 1;
  const std::size_t seg = kw * c;
  typename Tensor<Scalar>::RowMatrix cols(oh * ow, kh * seg);
  for (std::size_t oy = 0; oy < oh; ++oy)
    for (std::size_t ox = 0; ox < ow; ++ox) {
      Scalar* row = cols.data() + (oy * ow + ox) * kh * seg;
      for (std::size_t i = 0; i < kh; ++i) {
        const Scalar* src = input.data() + ((oy + i) * w + ox) * c;
        std::copy(src, src + seg, row + i * seg);
      }
    }
  return cols;
}

}  // namespace

template <typename Scalar>
Tensor<Scalar> conv2d(const Tensor<Scalar>& input, const ConvKernel<Scalar>& kernel) {
  check_conv(input, kernel);
  const std::size_t oh = input.dim(0) - kernel.kh() + 1, ow = input.dim(1) - kernel.kw() + 1;
  const std::size_t oc = kernel.out_channels();
  const auto cols = im2col(input, kernel.kh(), kernel.kw());
  Tensor<Scalar> out({oh, ow, oc});
  auto o = out.matrix(oh * ow, oc);
  o.noalias() = cols * kernel.weights.matrix(cols.cols(), oc);
  o.rowwise() += kernel.bias.vector().transpose();
  return out;
}

template <typename Scalar>
ConvGradients<Scalar> conv2d_backward(const Tensor<Scalar>& input, const ConvKernel<Scalar>& kernel,
                                      const Tensor<Scalar>& grad_out) {
  check_conv(input, kernel);
  const std::size_t kh = kernel.kh(), kw = kernel.kw(), c = input.dim(2), w = input.dim(1);
  const std::size_t oh = input.dim(0) - kh + 1, ow = w - kw + 1, oc = kernel.out_channels();
  if (grad_out.shape() != Shape{oh, ow, oc})
    throw ShapeError("conv2d_backward: grad_out " + to_string(grad_out.shape()) + " does not match output shape");

  const auto cols = im2col(input, kh, kw);
  const auto g = grad_out.matrix(oh * ow, oc);
  ConvGradients<Scalar> grads{Tensor<Scalar>(input.shape()), Tensor<Scalar>(kernel.weights.shape()),
                              Tensor<Scalar>(kernel.bias.shape())};
  grads.weights.matrix(cols.cols(), oc).noalias() = cols.transpose() * g;
  grads.bias.vector() = g.colwise().sum().transpose();

  const typename Tensor<Scalar>::RowMatrix gcols = g * kernel.weights.matrix(cols.cols(), oc).transpose();
  const std::size_t seg = kw * c;
  for (std::size_t oy = 0; oy < oh; ++oy)
    for (std::size_t ox = 0; ox < ow; ++ox) {
      const Scalar* row = gcols.data() + (oy * ow + ox) * kh * seg;
      for (std::size_t i = 0; i < kh; ++i) {
        Scalar* dst = grads.input.data() + ((oy + i) * w + ox) * c;
        for (std::size_t k = 0; k < seg; ++k) dst[k] += row[i * seg + k];
      }
    }
  return grads;
}

template <typename Scalar>
PoolResult<Scalar> maxpool2(const Tensor<Scalar>& input) {
  require_rank(input.shape(), 3, "maxpool2");
  const std::size_t h = input.dim(0), w = input.dim(1), c = input.dim(2);
  if (h < 2 || w < 2) throw ShapeError("maxpool2: spatial extent below 2 in " + to_string(input.shape()));
  const std::size_t oh = h / 2, ow = w / 2;
  PoolResult<Scalar> r{Tensor<Scalar>({oh, ow, c}), std::vector<std::uint32_t>(oh * ow * c)};
  for (std::size_t y = 0; y < oh; ++y)
    for (std::size_t x = 0; x < ow; ++x)
      for (std::size_t ch = 0; ch < c; ++ch) {
        std::size_t best = ((2 * y) * w + 2 * x) * c + ch;
        for (std::size_t dy = 0; dy < 2; ++dy)
          for (std::size_t dx = 0; dx < 2; ++dx) {
            const std::size_t idx = ((2 * y + dy) * w + 2 * x + dx) * c + ch;
            if (input[idx] > input[best]) best = idx;
          }
        const std::size_t o = (y * ow + x) * c + ch;
        r.output[o] = input[best];
        r.argmax[o] = static_cast<std::uint32_t>(best);
      }
  return r;
}

template <typename Scalar>
Tensor<Scalar> maxpool2_backward(const Shape& input_shape, std::span<const std::uint32_t> argmax,
                                 const Tensor<Scalar>& grad_out) {
  if (argmax.size() != grad_out.size()) throw ShapeError("maxpool2_backward: index count does not match grad_out");
  Tensor<Scalar> g(input_shape);
  for (std::size_t i = 0; i < argmax.size(); ++i) {
    if (argmax[i] >= g.size()) throw ShapeError("maxpool2_backward: stale argmax index");
    g[argmax[i]] += grad_out[i];
  }
  return g;
}

template <typename Scalar>
Tensor<Scalar> dense(const Tensor<Scalar>& input, const Tensor<Scalar>& weights, const Tensor<Scalar>& bias) {
  require_rank(weights.shape(), 2, "dense weights");
  const std::size_t m = weights.dim(0), n = weights.dim(1);
  if (input.size() != m || input.rank() != 1)
    throw ShapeError("dense: input " + to_string(input.shape()) + " does not match weights " + to_string(weights.shape()));
  if (bias.size() != n) throw ShapeError("dense: bias length does not match output units");
  Tensor<Scalar> out({n});
  out.vector().noalias() = weights.matrix(m, n).transpose() * input.vector();
  out.vector() += bias.vector();
  return out;
}

template <typename Scalar>
DenseGradients<Scalar> dense_backward(const Tensor<Scalar>& input, const Tensor<Scalar>& weights,
                                      const Tensor<Scalar>& grad_out) {
  require_rank(weights.shape(), 2, "dense weights");
  const std::size_t m = weights.dim(0), n = weights.dim(1);
  if (input.size() != m || grad_out.size() != n) throw ShapeError("dense_backward: shape mismatch");
  DenseGradients<Scalar> g{Tensor<Scalar>(input.shape()), Tensor<Scalar>(weights.shape()), Tensor<Scalar>({n})};
  g.input.vector().noalias() = weights.matrix(m, n) * grad_out.vector();
  g.weights.matrix(m, n).noalias() = input.vector() * grad_out.vector().transpose();
  g.bias.vector() = grad_out.vector();
  return g;
}

template <typename Scalar>
Tensor<Scalar> relu(const Tensor<Scalar>& t) {
  Tensor<Scalar> out = t;
  for (auto& v : out.values()) v = v > Scalar(0) ? v : Scalar(0);
  return out;
}

template <typename Scalar>
Tensor<Scalar> relu_backward(const Tensor<Scalar>& input, const Tensor<Scalar>& grad_out) {
  if (input.size() != grad_out.size()) throw ShapeError("relu_backward: shape mismatch");
  Tensor<Scalar> g = grad_out;
  for (std::size_t i = 0; i < g.size(); ++i)
    if (!(input[i] > Scalar(0))) g[i] = Scalar(0);
  return g;
}

template <typename Scalar>
Tensor<Scalar> softmax(const Tensor<Scalar>& t) {
  if (!all_finite(t)) throw NonFiniteError("softmax: non-finite input");
  Tensor<Scalar> out(t.shape());
  Scalar mx = t[0];
  for (auto v : t.values()) mx = std::max(mx, v);
  double sum = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double e = std::exp(static_cast<double>(t[i] - mx));
    out[i] = static_cast<Scalar>(e);
    sum += e;
  }
  for (auto& v : out.values()) v = static_cast<Scalar>(static_cast<double>(v) / sum);
  return out;
}

template <typename Scalar>
Tensor<Scalar> softmax_backward(const Tensor<Scalar>& output, const Tensor<Scalar>& grad_out) {
  if (output.size() != grad_out.size()) throw ShapeError("softmax_backward: shape mismatch");
  double dot = 0.0;
  for (std::size_t i = 0; i < output.size(); ++i) dot += static_cast<double>(output[i]) * grad_out[i];
  Tensor<Scalar> g(output.shape());
  for (std::size_t i = 0; i < output.size(); ++i)
    g[i] = static_cast<Scalar>(static_cast<double>(output[i]) * (static_cast<double>(grad_out[i]) - dot));
  return g;
}

template <typename Scalar>
Tensor<Scalar> global_avg_pool(const Tensor<Scalar>& input) {
  require_rank(input.shape(), 3, "global_avg_pool");
  const std::size_t n = input.dim(0) * input.dim(1), c = input.dim(2);
  std::vector<double> acc(c, 0.0);
  for (std::size_t p = 0; p < n; ++p)
    for (std::size_t ch = 0; ch < c; ++ch) acc[ch] += input[p * c + ch];
  Tensor<Scalar> out({c});
  for (std::size_t ch = 0; ch < c; ++ch) out[ch] = static_cast<Scalar>(acc[ch] / static_cast<double>(n));
  return out;
}

template <typename Scalar>
Tensor<Scalar> global_avg_pool_backward(const Shape& input_shape, const Tensor<Scalar>& grad_out) {
  require_rank(input_shape, 3, "global_avg_pool_backward");
  const std::size_t n = input_shape[0] * input_shape[1], c = input_shape[2];
  if (grad_out.size() != c) throw ShapeError("global_avg_pool_backward: shape mismatch");
  Tensor<Scalar> g(input_shape);
  const Scalar inv = Scalar(1) / static_cast<Scalar>(n);
  for (std::size_t p = 0; p < n; ++p)
    for (std::size_t ch = 0; ch < c; ++ch) g[p * c + ch] = grad_out[ch] * inv;
  return g;
}

template <typename Scalar>
DropoutResult<Scalar> dropout(const Tensor<Scalar>& t, double rate, Rng& rng, bool training) {
  if (!(rate >= 0.0 && rate < 1.0)) throw std::invalid_argument("dropout: rate must lie in [0, 1)");
  DropoutResult<Scalar> r{t, Tensor<Scalar>(t.shape(), Scalar(1))};
  if (!training || rate == 0.0) return r;
  const Scalar keep_scale = static_cast<Scalar>(1.0 / (1.0 - rate));
  for (std::size_t i = 0; i < t.size(); ++i) {
    const bool drop = uniform01(rng) < rate;
    r.mask[i] = drop ? Scalar(0) : keep_scale;
    r.output[i] = t[i] * r.mask[i];
  }
  return r;
}

template <typename Scalar>
Tensor<Scalar> dropout_backward(const Tensor<Scalar>& mask, const Tensor<Scalar>& grad_out) {
  if (mask.size() != grad_out.size()) throw ShapeError("dropout_backward: shape mismatch");
  Tensor<Scalar> g = grad_out;
  for (std::size_t i = 0; i < g.size(); ++i) g[i] *= mask[i];
  return g;
}

template <typename Scalar>
bool all_finite(const Tensor<Scalar>& t) {
  for (auto v : t.values())
    if (!std::isfinite(v)) return false;
  return true;
}

#define BLPNET_INSTANTIATE_TENSOR(S)                                                                      \
  template class Tensor<S>;                                                                               \
  template Tensor<S> conv2d(const Tensor<S>&, const ConvKernel<S>&);                                      \
  template ConvGradients<S> conv2d_backward(const Tensor<S>&, const ConvKernel<S>&, const Tensor<S>&);    \
  template PoolResult<S> maxpool2(const Tensor<S>&);                                                      \
  template Tensor<S> maxpool2_backward(const Shape&, std::span<const std::uint32_t>, const Tensor<S>&);   \
  template Tensor<S> dense(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&);                         \
  template DenseGradients<S> dense_backward(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&);        \
  template Tensor<S> relu(const Tensor<S>&);                                                              \
  template Tensor<S> relu_backward(const Tensor<S>&, const Tensor<S>&);                                   \
  template Tensor<S> softmax(const Tensor<S>&);                                                           \
  template Tensor<S> softmax_backward(const Tensor<S>&, const Tensor<S>&);                                \
  template Tensor<S> global_avg_pool(const Tensor<S>&);                                                   \
  template Tensor<S> global_avg_pool_backward(const Shape&, const Tensor<S>&);                            \
  template DropoutResult<S> dropout(const Tensor<S>&, double, Rng&, bool);                                \
  template Tensor<S> dropout_backward(const Tensor<S>&, const Tensor<S>&);                                \
  template bool all_finite(const Tensor<S>&);

BLPNET_INSTANTIATE_TENSOR(float)
BLPNET_INSTANTIATE_TENSOR(double)

#undef BLPNET_INSTANTIATE_TENSOR

}  // namespace blpnet
