#include "blpnet/augment.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

#include <Eigen/LU>

namespace blpnet {

AugmentConfig AugmentConfig::none() {
  AugmentConfig c;
  c.shift = c.rotation_deg = c.zoom = c.shear = 0.0;
  return c;
}

AugmentConfig AugmentConfig::detector() {
  AugmentConfig c;
  c.zoom = c.shear = 0.0;
  c.flip = true;
  c.contrast = 0.2;
  c.blur_sigma_max = 1.0;
  c.salt_pepper = 0.01;
  c.fill = 0.5f;
  return c;
}

void AugmentConfig::validate() const {
  if (shift < 0 || rotation_deg < 0 || zoom < 0 || shear < 0 || contrast < 0 || salt_pepper < 0 ||
      blur_sigma_min < 0 || blur_sigma_max < 0)
    throw std::invalid_argument("augment: magnitudes must be nonnegative");
  if (blur_sigma_min > blur_sigma_max) throw std::invalid_argument("augment: blur sigma range is inverted");
  if (zoom >= 1.0) throw std::invalid_argument("augment: zoom must be below 1");
  if (salt_pepper > 1.0) throw std::invalid_argument("augment: salt-and-pepper density must be at most 1");
}

GrayImage gaussian_blur(const GrayImage& image, double sigma) {
  if (!(sigma > 0.0)) return image;
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<float> k(2 * radius + 1);
  float sum = 0.0f;
  for (int i = -radius; i <= radius; ++i)
    sum += k[i + radius] = static_cast<float>(std::exp(-(i * i) / (2.0 * sigma * sigma)));
  for (auto& v : k) v /= sum;
  const Eigen::Index h = image.rows(), w = image.cols();
  GrayImage tmp(h, w), out(h, w);
  for (Eigen::Index y = 0; y < h; ++y)
    for (Eigen::Index x = 0; x < w; ++x) {
      float acc = 0.0f;
      for (int i = -radius; i <= radius; ++i) acc += k[i + radius] * image(y, std::clamp<Eigen::Index>(x + i, 0, w - 1));
      tmp(y, x) = acc;
    }
  for (Eigen::Index y = 0; y < h; ++y)
    for (Eigen::Index x = 0; x < w; ++x) {
      float acc = 0.0f;
      for (int i = -radius; i <= radius; ++i) acc += k[i + radius] * tmp(std::clamp<Eigen::Index>(y + i, 0, h - 1), x);
      out(y, x) = acc;
    }
  return out;
}

GrayImage augment(const GrayImage& image, const AugmentConfig& c, Rng& rng) {
  c.validate();
  const double h = static_cast<double>(image.rows()), w = static_cast<double>(image.cols());
  const double theta = uniform(rng, -c.rotation_deg, c.rotation_deg) * std::numbers::pi / 180.0;
  const double tx = uniform(rng, -c.shift, c.shift) * w;
  const double ty = uniform(rng, -c.shift, c.shift) * h;
  const double zoom = uniform(rng, 1.0 - c.zoom, 1.0 + c.zoom);
  const double shear = uniform(rng, -c.shear, c.shear);
  const bool flip = c.flip && uniform01(rng) < 0.5;

  GrayImage out = image;
  if (theta != 0.0 || tx != 0.0 || ty != 0.0 || zoom != 1.0 || shear != 0.0 || flip) {
    // Forward map about the image centre: p' = T R Sh Z F (p - centre) + centre.
    Eigen::Matrix2d rot;
    rot << std::cos(theta), -std::sin(theta), std::sin(theta), std::cos(theta);
    Eigen::Matrix2d sh;
    sh << 1.0, shear, 0.0, 1.0;
    Eigen::Matrix2d lin = rot * sh * zoom;
    if (flip) lin.col(0) *= -1.0;
    const Eigen::Vector2d centre((w - 1) / 2.0, (h - 1) / 2.0);
    const Eigen::Matrix2d inv = lin.inverse();
    Eigen::Matrix<double, 2, 3> m;
    m.leftCols<2>() = inv;
    m.col(2) = centre - inv * (centre + Eigen::Vector2d(tx, ty));
    out = warp_affine(image, m, c.fill);
  }

  if (c.contrast > 0.0) {
    const float gain = static_cast<float>(uniform(rng, 1.0 - c.contrast, 1.0 + c.contrast));
    out = (out - 0.5f) * gain + 0.5f;
  }
  if (c.blur_sigma_max > 0.0) out = gaussian_blur(out, uniform(rng, c.blur_sigma_min, c.blur_sigma_max));
  if (c.salt_pepper > 0.0) {
    for (Eigen::Index i = 0; i < out.size(); ++i) {
      const double u = uniform01(rng);
      if (u < c.salt_pepper) out.data()[i] = u < c.salt_pepper / 2 ? 0.0f : 1.0f;
    }
  }
  return clamp01(out);
}

}  // namespace blpnet
