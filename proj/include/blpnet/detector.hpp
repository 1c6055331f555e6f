#pragma once

#include <array>
#include <filesystem>
#include <memory>
#include <optional>
#include <stdexcept>

#include "blpnet/image.hpp"
#include "blpnet/nn.hpp"

namespace blpnet {

/// Normalized [0, 1] frame coordinates.
struct BBox {
  double x_min = 0, y_min = 0, x_max = 1, y_max = 1;

  bool valid() const {
    return 0.0 <= x_min && x_min <= x_max && x_max <= 1.0 && 0.0 <= y_min && y_min <= y_max && y_max <= 1.0;
  }
  // Maps a box expressed inside `outer` back to outer's frame.
  BBox within(const BBox& outer) const;
  bool operator==(const BBox&) const = default;
};

enum class Stage { Vehicle, Plate };

struct Detection {
  BBox bbox;
  std::array<double, 2> class_probs{0.5, 0.5};  // {object, background}
  Stage stage = Stage::Vehicle;
  double score() const { return class_probs[0]; }
};

class DegenerateCropError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Backbone interface: maps an image to a feature map of fixed shape.
class FeatureProvider {
 public:
  virtual ~FeatureProvider() = default;
  virtual Shape output_shape() const = 0;
  virtual Tensor<float> extract(const GrayImage& image) const = 0;
};

/// Deterministic stand-in for a pretrained backbone: a fixed 1x1 conv picks
/// out dark and bright regions, a 2x2 max-pool halves the map, and each
/// response is modulated by the monomials {1, u, v, u^2, v^2, uv} of the
/// normalized position so global pooling yields region moments. All but the
/// first monomial are divided by the response mass, so they pool to centroids
/// and second moments rather than quantities that scale with region area.
class ToyBackbone final : public FeatureProvider {
 public:
  static constexpr int kInputSize = 64;
  static constexpr std::size_t kChannels = 12;

  ToyBackbone();
  Shape output_shape() const override { return {kInputSize / 2, kInputSize / 2, kChannels}; }
  Tensor<float> extract(const GrayImage& image) const override;

 private:
  ConvKernel<float> response_;
};

/// Serves a precomputed feature tensor from a BLPW container.
class FileFeatureProvider final : public FeatureProvider {
 public:
  explicit FileFeatureProvider(const std::filesystem::path& path);
  Shape output_shape() const override { return features_.shape(); }
  Tensor<float> extract(const GrayImage& image) const override;

 private:
  Tensor<float> features_;
};

/// Two parallel dense branches over the pooled backbone features.
struct DetectorHead {
  std::size_t feature_dim = 0;
  NetworkSpec class_branch;  // ... Dense(2) -> Softmax
  NetworkSpec bbox_branch;   // ... Dense(4), linear
};

struct HeadParams {
  ParameterStore<float> class_params;
  ParameterStore<float> bbox_params;
};

inline constexpr double kHeadDropout = 0.2;
inline constexpr std::size_t kPlateFeatureDim = 2048;

DetectorHead build_detector_head(std::size_t feature_dim, double dropout_rate = kHeadDropout);
HeadParams init_head_params(const DetectorHead& head, Rng& rng);

// Both branches in one store, class branch first; names carry the branch prefix.
ParameterStore<float> join_head_params(const HeadParams& params);
HeadParams split_head_params(const DetectorHead& head, const ParameterStore<float>& joined);
// Rebuilds the head from the kernel shapes stored in a joined parameter file.
std::pair<DetectorHead, HeadParams> load_head(const std::filesystem::path& path);

// Global-average-pools rank-3 features; rank-1 features are used as is.
Tensor<float> pooled_features(const Tensor<float>& features);

struct HeadOutput {
  std::array<double, 2> class_probs{};
  std::array<double, 4> bbox{};  // raw regression output, unclamped
};

HeadOutput run_head(const DetectorHead& head, const HeadParams& params, const Tensor<float>& features);

std::optional<Detection> detect(const GrayImage& image, const FeatureProvider& provider, const DetectorHead& head,
                                const HeadParams& params, double score_threshold, Stage stage = Stage::Vehicle);

// Rounds to the nearest pixel bounds; throws DegenerateCropError on zero area.
PixelRect bbox_to_pixels(const BBox& bbox, int width, int height);
GrayImage crop(const GrayImage& image, const BBox& bbox);

double bbox_mse(const BBox& predicted, const BBox& target);

}  // namespace blpnet
