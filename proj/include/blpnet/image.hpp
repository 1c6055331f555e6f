#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "blpnet/tensor.hpp"

namespace blpnet {

/// Row-major single-channel image; rows() is the height, cols() the width.
template <typename Scalar>
using Image = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using GrayImage = Image<float>;
using Mask = Eigen::Array<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

class ImageDecodeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Pixel rectangle, half-open: [x0, x1) x [y0, y1).
struct PixelRect {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  int width() const { return x1 - x0; }
  int height() const { return y1 - y0; }
  bool operator==(const PixelRect&) const = default;
};

// Netpbm P2/P3/P5/P6; color is reduced to luma (Rec. 601). Values in [0, 1].
GrayImage decode_pnm(std::span<const std::byte> bytes);
// PNM natively, PNG when built with libpng. Throws ImageDecodeError.
GrayImage read_image(const std::filesystem::path& path);
void write_pgm(const GrayImage& image, const std::filesystem::path& path);
void write_pgm(const Mask& mask, const std::filesystem::path& path);
std::vector<std::byte> encode_pgm(const GrayImage& image);

#ifdef BLPNET_WITH_PNG
GrayImage decode_png(std::span<const std::byte> bytes);
#endif

template <typename Derived>
auto clamp01(const Eigen::ArrayBase<Derived>& a) {
  using S = typename Derived::Scalar;
  return a.max(S(0)).min(S(1));
}

GrayImage resize_bilinear(const GrayImage& image, int height, int width);

// Bilinear sample with replicate-edge clamping.
float sample_bilinear(const GrayImage& image, double y, double x);

// Each output pixel (x, y) reads input at inverse * (x, y, 1) in pixel-centre
// coordinates; out-of-range reads yield `fill`.
GrayImage warp_affine(const GrayImage& image, const Eigen::Matrix<double, 2, 3>& inverse, float fill);

GrayImage crop(const GrayImage& image, const PixelRect& rect);

// [h, w, 1] tensor view of an image.
Tensor<float> to_tensor(const GrayImage& image);

}  // namespace blpnet
