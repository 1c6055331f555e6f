#include "blpnet/deblur.hpp"

#include <Eigen/Dense>
#include <limits>
#include <numbers>

namespace blpnet {

BlurKernel BlurKernel::identity() { return {Image<double>::Ones(1, 1)}; }

BlurKernel BlurKernel::horizontal_motion(int length) {
  if (length < 1) throw std::invalid_argument("motion kernel length must be positive");
  return {Image<double>::Constant(1, length, 1.0 / length)};
}

BlurKernel BlurKernel::box(int height, int width) {
  if (height < 1 || width < 1) throw std::invalid_argument("box kernel size must be positive");
  return {Image<double>::Constant(height, width, 1.0 / (height * width))};
}

void BlurKernel::validate() const {
  if (taps.size() == 0) throw std::invalid_argument("blur kernel is empty");
  if ((taps < 0.0).any() || !taps.allFinite()) throw std::invalid_argument("blur kernel taps must be nonnegative");
  if (std::abs(taps.sum() - 1.0) > 1e-6) throw std::invalid_argument("blur kernel taps must sum to 1");
}

std::vector<BlurKernel> default_kernel_bank() {
  return {BlurKernel::horizontal_motion(3), BlurKernel::horizontal_motion(5), BlurKernel::horizontal_motion(9)};
}

Image<double> convolve(const Image<double>& image, const BlurKernel& kernel) {
  const Eigen::Index h = image.rows(), w = image.cols();
  const Eigen::Index kh = kernel.taps.rows(), kw = kernel.taps.cols(), cy = kh / 2, cx = kw / 2;
  Image<double> out = Image<double>::Zero(h, w);
  for (Eigen::Index a = 0; a < kh; ++a)
    for (Eigen::Index b = 0; b < kw; ++b) {
      const double k = kernel.taps(a, b);
      if (k == 0.0) continue;
      for (Eigen::Index y = 0; y < h; ++y) {
        const Eigen::Index sy = std::clamp<Eigen::Index>(y + a - cy, 0, h - 1);
        for (Eigen::Index x = 0; x < w; ++x)
          out(y, x) += k * image(sy, std::clamp<Eigen::Index>(x + b - cx, 0, w - 1));
      }
    }
  return out;
}

Image<double> convolve_adjoint(const Image<double>& image, const BlurKernel& kernel) {
  const Eigen::Index h = image.rows(), w = image.cols();
  const Eigen::Index kh = kernel.taps.rows(), kw = kernel.taps.cols(), cy = kh / 2, cx = kw / 2;
  Image<double> out = Image<double>::Zero(h, w);
  for (Eigen::Index a = 0; a < kh; ++a)
    for (Eigen::Index b = 0; b < kw; ++b) {
      const double k = kernel.taps(a, b);
      if (k == 0.0) continue;
      for (Eigen::Index y = 0; y < h; ++y) {
        const Eigen::Index sy = std::clamp<Eigen::Index>(y + a - cy, 0, h - 1);
        for (Eigen::Index x = 0; x < w; ++x)
          out(sy, std::clamp<Eigen::Index>(x + b - cx, 0, w - 1)) += k * image(y, x);
      }
    }
  return out;
}

FilterCoefficients wiener_fit(std::span<const double> blurred, std::span<const double> reference, std::size_t order) {
  if (blurred.size() != reference.size()) throw std::invalid_argument("wiener_fit: sequences differ in length");
  if (blurred.size() <= order) throw std::invalid_argument("wiener_fit: sequence shorter than the tap count");
  const auto taps = static_cast<Eigen::Index>(order + 1);
  const auto rows = static_cast<Eigen::Index>(blurred.size() - order);
  Eigen::MatrixXd X(rows, taps);
  Eigen::VectorXd s(rows);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const std::size_t n = static_cast<std::size_t>(r) + order;
    for (Eigen::Index i = 0; i < taps; ++i) X(r, i) = blurred[n - static_cast<std::size_t>(i)];
    s(r) = reference[n];
  }
  FilterCoefficients f;
  f.order = order;
  Eigen::MatrixXd normal = X.transpose() * X;
  const Eigen::VectorXd rhs = X.transpose() * s;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(normal);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive() || ldlt.rcond() < 1e-12) {
    const double ridge = 1e-8 * std::max(normal.trace() / static_cast<double>(taps), 1.0);
    normal.diagonal().array() += ridge;
    ldlt.compute(normal);
    f.regularized = true;
  }
  f.taps = ldlt.solve(rhs);
  f.residual = s - X * f.taps;
  f.residual_mse = f.residual.squaredNorm() / static_cast<double>(rows);
  return f;
}

std::vector<double> apply_fir(const FilterCoefficients& filter, std::span<const double> input) {
  std::vector<double> out(input.size(), 0.0);
  for (std::size_t n = 0; n < input.size(); ++n)
    for (std::size_t i = 0; i <= filter.order && i <= n; ++i)
      out[n] += filter.taps(static_cast<Eigen::Index>(i)) * input[n - i];
  return out;
}

void fft(std::span<std::complex<double>> a, bool inverse) {
  const std::size_t n = a.size();
  if (n == 0 || (n & (n - 1)) != 0) throw std::invalid_argument("fft: size must be a power of two");
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = 2.0 * std::numbers::pi / static_cast<double>(len) * (inverse ? 1.0 : -1.0);
    const std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0);
      for (std::size_t j = 0; j < len / 2; ++j) {
        const auto u = a[i + j], v = a[i + j + len / 2] * w;
        a[i + j] = u + v;
        a[i + j + len / 2] = u - v;
        w *= wl;
      }
    }
  }
  if (inverse)
    for (auto& v : a) v /= static_cast<double>(n);
}

namespace {

using ComplexImage = Eigen::Array<std::complex<double>, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Index next_pow2(Eigen::Index n) {
  Eigen::Index p = 1;
  while (p < n) p <<= 1;
  return p;
}

void fft2(ComplexImage& a, bool inverse) {
  std::vector<std::complex<double>> line;
  for (Eigen::Index y = 0; y < a.rows(); ++y) fft(std::span(&a(y, 0), static_cast<std::size_t>(a.cols())), inverse);
  line.resize(static_cast<std::size_t>(a.rows()));
  for (Eigen::Index x = 0; x < a.cols(); ++x) {
    for (Eigen::Index y = 0; y < a.rows(); ++y) line[static_cast<std::size_t>(y)] = a(y, x);
    fft(line, inverse);
    for (Eigen::Index y = 0; y < a.rows(); ++y) a(y, x) = line[static_cast<std::size_t>(y)];
  }
}

}  // namespace

GrayImage wiener_deconvolve(const GrayImage& image, const BlurKernel& kernel, double noise_power) {
  kernel.validate();
  if (!(noise_power >= 0.0)) throw std::invalid_argument("wiener_deconvolve: noise_power must be >= 0");
  const Eigen::Index h = image.rows(), w = image.cols();
  const Eigen::Index kh = kernel.taps.rows(), kw = kernel.taps.cols();
  const Eigen::Index py = kh, px = kw;  // replicate margin on each side
  const Eigen::Index H = next_pow2(h + 2 * py), W = next_pow2(w + 2 * px);

  ComplexImage img(H, W), ker = ComplexImage::Zero(H, W);
  for (Eigen::Index y = 0; y < H; ++y)
    for (Eigen::Index x = 0; x < W; ++x) {
      // pad by replication, then centre the image in the grid
      const Eigen::Index sy = std::clamp<Eigen::Index>(y - py, 0, h - 1);
      const Eigen::Index sx = std::clamp<Eigen::Index>(x - px, 0, w - 1);
      img(y, x) = static_cast<double>(image(sy, sx));
    }
  // convolve() correlates with taps centred at (kh/2, kw/2); its circular
  // transfer function places tap (a, b) at (cy - a, cx - b) mod grid.
  for (Eigen::Index a = 0; a < kh; ++a)
    for (Eigen::Index b = 0; b < kw; ++b) {
      const Eigen::Index y = ((kh / 2 - a) % H + H) % H, x = ((kw / 2 - b) % W + W) % W;
      ker(y, x) += kernel.taps(a, b);
    }
  fft2(img, false);
  fft2(ker, false);
  for (Eigen::Index i = 0; i < img.size(); ++i) {
    const auto hk = ker.data()[i];
    const double denom = std::norm(hk) + noise_power;
    img.data()[i] = denom > 1e-12 ? img.data()[i] * std::conj(hk) / denom : std::complex<double>(0.0);
  }
  fft2(img, true);
  GrayImage out(h, w);
  for (Eigen::Index y = 0; y < h; ++y)
    for (Eigen::Index x = 0; x < w; ++x) out(y, x) = static_cast<float>(std::clamp(img(y + py, x + px).real(), 0.0, 1.0));
  return out;
}

namespace {

// Orthonormal single-level Haar on the even-sized top-left block, soft-thresholding the three detail bands.
void haar_shrink(Image<double>& x, double threshold) {
  const Eigen::Index h2 = x.rows() / 2, w2 = x.cols() / 2;
  auto soft = [threshold](double v) { return std::copysign(std::max(std::abs(v) - threshold, 0.0), v); };
  for (Eigen::Index i = 0; i < h2; ++i)
    for (Eigen::Index j = 0; j < w2; ++j) {
      const double a = x(2 * i, 2 * j), b = x(2 * i, 2 * j + 1), c = x(2 * i + 1, 2 * j), d = x(2 * i + 1, 2 * j + 1);
      const double ll = (a + b + c + d) / 2;
      const double lh = soft((a - b + c - d) / 2);
      const double hl = soft((a + b - c - d) / 2);
      const double hh = soft((a - b - c + d) / 2);
      x(2 * i, 2 * j) = (ll + lh + hl + hh) / 2;
      x(2 * i, 2 * j + 1) = (ll - lh + hl - hh) / 2;
      x(2 * i + 1, 2 * j) = (ll + lh - hl - hh) / 2;
      x(2 * i + 1, 2 * j + 1) = (ll - lh - hl + hh) / 2;
    }
}

}  // namespace

double operator_norm_sq(const BlurKernel& kernel, Eigen::Index height, Eigen::Index width) {
  Image<double> v(height, width);
  // deterministic, non-degenerate start vector
  for (Eigen::Index i = 0; i < v.size(); ++i) v.data()[i] = 1.0 + 0.5 * std::sin(0.7 * static_cast<double>(i));
  double norm = 0.0;
  for (int it = 0; it < 50; ++it) {
    Image<double> u = convolve_adjoint(convolve(v, kernel), kernel);
    const double n = std::sqrt(u.square().sum());
    if (n == 0.0) return 0.0;
    v = u / n;
    if (std::abs(n - norm) <= 1e-9 * n) {
      norm = n;
      break;
    }
    norm = n;
  }
  return norm;
}

HaarResult haar_deblur(const GrayImage& image, const BlurKernel& kernel, double threshold, const HaarConfig& config) {
  kernel.validate();
  if (image.rows() < 2 || image.cols() < 2) throw std::invalid_argument("haar_deblur: image must be at least 2x2");
  if (threshold < 0.0) throw std::invalid_argument("haar_deblur: threshold must be >= 0");
  const Image<double> y = image.cast<double>();
  const double tau = 1.0 / std::max(operator_norm_sq(kernel, y.rows(), y.cols()), 1e-12);
  Image<double> x = y, best = y;
  double best_change = std::numeric_limits<double>::infinity();
  HaarResult r;
  for (r.iterations = 1; r.iterations <= config.max_iterations; ++r.iterations) {
    Image<double> next = x + tau * convolve_adjoint(y - convolve(x, kernel), kernel);
    haar_shrink(next, threshold);
    next = clamp01(next);
    const double change = std::sqrt((next - x).square().sum()) / std::max(std::sqrt(x.square().sum()), 1e-12);
    x = std::move(next);
    if (change < best_change) {
      best_change = change;
      best = x;
    }
    if (change < config.tolerance) {
      r.converged = true;
      break;
    }
  }
  r.iterations = std::min(r.iterations, config.max_iterations);
  r.image = (r.converged ? x : best).cast<float>();
  r.mse_vs_input = image_mse(r.image, image);
  return r;
}

void FistaConfig::validate() const {
  if (!(lambda > 0.0)) throw std::invalid_argument("FISTA lambda must be positive");
  if (!(decay > 0.0 && decay <= 1.0)) throw std::invalid_argument("FISTA decay must lie in (0, 1]");
  if (step < 0.0) throw std::invalid_argument("FISTA step must be >= 0");
  if (prox_iterations == 0) throw std::invalid_argument("FISTA needs at least one prox iteration");
}

double total_variation(const Image<double>& x) {
  const Eigen::Index h = x.rows(), w = x.cols();
  double tv = 0.0;
  if (h > 1) tv += (x.bottomRows(h - 1) - x.topRows(h - 1)).abs().sum();
  if (w > 1) tv += (x.rightCols(w - 1) - x.leftCols(w - 1)).abs().sum();
  return tv;
}

double deblur_objective(const Image<double>& x, const Image<double>& observed, const BlurKernel& kernel,
                        double lambda) {
  return 0.5 * (convolve(x, kernel) - observed).square().sum() + lambda * total_variation(x);
}

namespace {

// Dual of anisotropic TV: p pairs with vertical differences (h-1 x w),
// q with horizontal ones (h x w-1).
struct TvDual {
  Image<double> p, q;
};

// D^T applied to the dual field.
Image<double> tv_adjoint(const TvDual& d, Eigen::Index h, Eigen::Index w) {
  Image<double> out = Image<double>::Zero(h, w);
  if (h > 1) {
    out.topRows(h - 1) -= d.p;
    out.bottomRows(h - 1) += d.p;
  }
  if (w > 1) {
    out.leftCols(w - 1) -= d.q;
    out.rightCols(w - 1) += d.q;
  }
  return out;
}

// argmin_{x in [0,1]} 0.5 ||x - b||^2 + mu * TV(x). Fast gradient projection
// on the dual; `dual` carries a warm start in and the final iterate out.
Image<double> tv_prox(const Image<double>& b, double mu, std::size_t iterations, TvDual& dual) {
  const Eigen::Index h = b.rows(), w = b.cols();
  auto primal = [&](const TvDual& d) -> Image<double> { return clamp01(b - mu * tv_adjoint(d, h, w)); };
  TvDual r = dual, prev = dual;
  double t = 1.0;
  // dual gradient is mu * D x with Lipschitz constant 8 mu^2
  const double step = 1.0 / (8.0 * mu);
  for (std::size_t k = 0; k < iterations; ++k) {
    const Image<double> x = primal(r);
    TvDual next;
    next.p = h > 1 ? Image<double>((r.p + step * (x.bottomRows(h - 1) - x.topRows(h - 1))).max(-1.0).min(1.0))
                   : r.p;
    next.q = w > 1 ? Image<double>((r.q + step * (x.rightCols(w - 1) - x.leftCols(w - 1))).max(-1.0).min(1.0))
                   : r.q;
    const double t_next = (1.0 + std::sqrt(1.0 + 4.0 * t * t)) / 2.0;
    const double m = (t - 1.0) / t_next;
    r.p = next.p + m * (next.p - prev.p);
    r.q = next.q + m * (next.q - prev.q);
    prev = std::move(next);
    t = t_next;
  }
  dual = prev;
  return primal(prev);
}

}  // namespace

FistaResult fista_deblur(const GrayImage& image, const BlurKernel& kernel, const FistaConfig& config) {
  config.validate();
  kernel.validate();
  const Image<double> y = image.cast<double>();
  const Eigen::Index h = y.rows(), w = y.cols();
  if (h == 0 || w == 0) throw std::invalid_argument("fista_deblur: empty image");
  double lipschitz = config.step > 0.0 ? 1.0 / config.step : std::max(operator_norm_sq(kernel, h, w), 1e-12);

  FistaResult r;
  for (;;) {
    Image<double> x = clamp01(y), z = x;
    TvDual dual{Image<double>::Zero(std::max<Eigen::Index>(h - 1, 1), w),
                Image<double>::Zero(h, std::max<Eigen::Index>(w - 1, 1))};
    double fx = deblur_objective(x, y, kernel, config.lambda);
    double t = 1.0;
    r.objective.assign(1, fx);
    r.converged = false;
    bool diverged = false;
    std::size_t k = 0;
    for (; k < config.max_iterations; ++k) {
      const Image<double> grad = convolve_adjoint(convolve(z, kernel) - y, kernel);
      const Image<double> u = tv_prox(z - grad / lipschitz, config.lambda / lipschitz, config.prox_iterations, dual);
      const double fu = deblur_objective(u, y, kernel, config.lambda);
      if (!std::isfinite(fu)) {
        diverged = true;
        break;
      }
      const bool take = !config.monotone || fu <= fx;
      const Image<double> x_next = take ? u : x;
      const double f_next = take ? fu : fx;
      const double t_next = (1.0 + std::sqrt(1.0 + 4.0 * t * t)) / 2.0;
      z = x_next + (t / t_next) * (u - x_next) + ((t - 1.0) / t_next) * (x_next - x);
      const double change =
          std::sqrt((x_next - x).square().sum()) / std::max(std::sqrt(x.square().sum()), 1e-12);
      x = x_next;
      fx = f_next;
      t = t_next;
      r.objective.push_back(fx);
      if (take && change < config.tolerance) {
        r.converged = true;
        ++k;
        break;
      }
    }
    if (diverged && r.step_halvings < config.max_step_halvings) {
      ++r.step_halvings;
      lipschitz *= 2.0;
      continue;
    }
    r.iterations = k;
    r.step = 1.0 / lipschitz;
    r.image = x.cast<float>();
    return r;
  }
}

}  // namespace blpnet
