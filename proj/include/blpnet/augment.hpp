#pragma once

#include "blpnet/image.hpp"
#include "blpnet/random.hpp"

namespace blpnet {

/// Each magnitude is the half-width of a uniform draw, e.g. rotation 7.5
/// draws an angle in [-7.5, 7.5] degrees. Zero disables a transform.
struct AugmentConfig {
  double shift = 0.10;  // fraction of width / height
  double rotation_deg = 7.5;
  double zoom = 0.20;   // scale in [1 - zoom, 1 + zoom]
  double shear = 0.20;  // horizontal shear factor
  bool flip = false;    // horizontal mirror with probability 1/2
  double contrast = 0.0;  // gain in [1 - contrast, 1 + contrast] around 0.5
  double blur_sigma_min = 0.0;
  double blur_sigma_max = 0.0;
  double salt_pepper = 0.0;  // fraction of pixels forced to 0 or 1
  float fill = 0.0f;         // value for pixels mapped from outside the image
  std::uint64_t seed = 0;

  static AugmentConfig none();
  // Photometric and geometric mix used for the detector images.
  static AugmentConfig detector();

  // Throws std::invalid_argument on negative magnitudes or an inverted blur range.
  void validate() const;
};

GrayImage augment(const GrayImage& image, const AugmentConfig& config, Rng& rng);

// Separable Gaussian with replicate edges.
GrayImage gaussian_blur(const GrayImage& image, double sigma);

}  // namespace blpnet
