#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "blpnet/image.hpp"

namespace blpnet {

/// Nonnegative 2-D taps summing to one. Convolution is centred on
/// (rows/2, cols/2) with replicate-edge boundaries.
struct BlurKernel {
  Image<double> taps;

  static BlurKernel identity();
  static BlurKernel horizontal_motion(int length);
  static BlurKernel box(int height, int width);
  // Throws std::invalid_argument unless taps are nonnegative and sum to 1 within 1e-6.
  void validate() const;
};

// Default kernel bank tried in order by the recognition retry loop.
std::vector<BlurKernel> default_kernel_bank();

Image<double> convolve(const Image<double>& image, const BlurKernel& kernel);
// Exact adjoint of convolve(), boundary replication included.
Image<double> convolve_adjoint(const Image<double>& image, const BlurKernel& kernel);

/// Variance of the 4-neighbour discrete Laplacian (replicate edges).
template <typename Derived>
double sharpness(const Eigen::ArrayBase<Derived>& image) {
  const Eigen::Index h = image.rows(), w = image.cols();
  if (h == 0 || w == 0) throw std::invalid_argument("sharpness: empty image");
  auto at = [&](Eigen::Index y, Eigen::Index x) {
    return static_cast<double>(image(std::clamp<Eigen::Index>(y, 0, h - 1), std::clamp<Eigen::Index>(x, 0, w - 1)));
  };
  double sum = 0.0, sq = 0.0;
  for (Eigen::Index y = 0; y < h; ++y)
    for (Eigen::Index x = 0; x < w; ++x) {
      const double l = 4.0 * at(y, x) - at(y - 1, x) - at(y + 1, x) - at(y, x - 1) - at(y, x + 1);
      sum += l;
      sq += l * l;
    }
  const double n = static_cast<double>(h * w);
  return std::max(0.0, sq / n - (sum / n) * (sum / n));
}

/// Mean squared pixel difference.
template <typename DerivedA, typename DerivedB>
double image_mse(const Eigen::ArrayBase<DerivedA>& a, const Eigen::ArrayBase<DerivedB>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeError("image_mse: dimension mismatch");
  if (a.size() == 0) throw ShapeError("image_mse: empty images");
  return (a.template cast<double>() - b.template cast<double>()).square().mean();
}

// Peak signal-to-noise ratio for unit peak, in dB.
template <typename DerivedA, typename DerivedB>
double psnr(const Eigen::ArrayBase<DerivedA>& a, const Eigen::ArrayBase<DerivedB>& b) {
  return 10.0 * std::log10(1.0 / std::max(image_mse(a, b), 1e-20));
}

/// FIR restoration filter x[n] = sum_i a_i * input[n - i], i = 0..order.
struct FilterCoefficients {
  Eigen::VectorXd taps;      // a_0 .. a_order
  std::size_t order = 0;     // N
  Eigen::VectorXd residual;  // e[n] = reference[n] - x[n], for n = order .. len-1
  double residual_mse = 0.0;
  bool regularized = false;  // normal matrix was singular; a ridge term was added
};

// Least-squares fit of the taps against a reference signal via the normal equations.
FilterCoefficients wiener_fit(std::span<const double> blurred, std::span<const double> reference, std::size_t order);
std::vector<double> apply_fir(const FilterCoefficients& filter, std::span<const double> input);

// Frequency-domain Wiener inverse conj(H) / (|H|^2 + noise_power), applied on a
// replicate-padded power-of-two grid.
GrayImage wiener_deconvolve(const GrayImage& image, const BlurKernel& kernel, double noise_power);

// In-place radix-2 FFT; size must be a power of two.
void fft(std::span<std::complex<double>> data, bool inverse);

struct HaarConfig {
  std::size_t max_iterations = 200;
  double tolerance = 1e-5;
};

struct HaarResult {
  GrayImage image;
  double mse_vs_input = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
};

// Landweber deconvolution steps, each followed by single-level Haar
// soft-thresholding of the detail bands. Non-convergence returns the best
// iterate (smallest change) with converged == false.
HaarResult haar_deblur(const GrayImage& image, const BlurKernel& kernel, double threshold, const HaarConfig& config = {});

struct FistaConfig {
  double lambda = 0.02;           // TV weight
  std::size_t max_iterations = 150;
  double tolerance = 1e-5;        // relative change between iterates
  double step = 0.0;              // 0 selects 1 / ||K||^2 by power iteration
  double decay = 0.5;             // lambda multiplier per recognition retry
  bool monotone = true;
  std::size_t prox_iterations = 20;
  std::size_t max_step_halvings = 6;

  void validate() const;
};

struct FistaResult {
  GrayImage image;
  std::vector<double> objective;  // F(x_k) for k = 0 (input) .. iterations
  std::size_t iterations = 0;
  bool converged = false;
  std::size_t step_halvings = 0;
  double step = 0.0;
};

// 0.5 * ||K x - y||^2 + lambda * TV(x), anisotropic TV over forward differences.
double deblur_objective(const Image<double>& x, const Image<double>& observed, const BlurKernel& kernel,
                        double lambda);
double total_variation(const Image<double>& x);

// ||K||^2 estimate for the replicate-edge operator on an h x w grid.
double operator_norm_sq(const BlurKernel& kernel, Eigen::Index height, Eigen::Index width);

// TV-regularized deconvolution by FISTA; the prox is solved by a dual
// projected-gradient inner loop with the [0, 1] box folded in.
FistaResult fista_deblur(const GrayImage& image, const BlurKernel& kernel, const FistaConfig& config);

}  // namespace blpnet
