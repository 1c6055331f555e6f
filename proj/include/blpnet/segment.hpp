#pragma once

#include <cstddef>
#include <limits>
#include <optional>
#include <vector>

#include "blpnet/image.hpp"

namespace blpnet {

using LabelImage = Eigen::Array<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct LevelSetField {
  Image<double> phi;
  std::size_t iterations = 0;
};

/// Chan-Vese parameters, in units of the [0, 1]-normalized image.
struct CvParams {
  double mu = 0.1;  // length weight
  double nu = 0.0;  // area weight
  double lambda1 = 1.0;
  double lambda2 = 1.0;
  double time_step = 0.5;
  std::size_t max_iterations = 200;
  double tolerance = 1e-3;  // RMS change of phi per iteration
  double epsilon = 1.0;     // regularized Dirac width
  double checkerboard_period = 5.0;
  std::size_t checkpoint_every = 5;
};

struct CvResult {
  Mask mask;  // phi > 0, oriented so that it is the brighter phase
  double c1 = 0.0, c2 = 0.0;  // inside / outside means, input intensity units
  LevelSetField field;
  std::vector<double> energy;  // fidelity + mu * length at each checkpoint
  bool converged = false;
  bool degenerate = false;  // single phase (e.g. constant input)
};

CvResult chan_vese(const GrayImage& image, const CvParams& params = {});

// Sharp two-phase energy of a mask on the normalized image: data terms with
// the given means plus mu times the isotropic boundary length.
double chan_vese_energy(const Image<double>& normalized, const Mask& inside, double c1, double c2,
                        const CvParams& params);

enum class RsfInit { LocalContrast, CenteredCircle };

/// Region-scalable fitting parameters. Intensities are rescaled to [0, 255]
/// internally so the customary weights apply unchanged.
struct RsfParams {
  double sigma = 3.0;
  double lambda1 = 1.0;
  double lambda2 = 1.0;
  double nu = 0.003 * 255.0 * 255.0;  // length weight
  double mu = 1.0;                    // distance regularization
  double time_step = 0.1;
  double epsilon = 1.0;
  std::size_t max_iterations = 150;
  double tolerance = 1e-3;  // RMS change of phi per iteration
  double init_level = 2.0;
  double contrast_threshold = 0.05;  // LocalContrast init, normalized units
  RsfInit init = RsfInit::LocalContrast;
};

struct RsfResult {
  Mask mask;  // phi > 0, the brighter phase
  LevelSetField field;
  bool converged = false;
  bool degenerate = false;
};

RsfResult rsf(const GrayImage& image, const RsfParams& params = {});

struct Region {
  int label = 0;
  PixelRect box;
  std::size_t area = 0;
  double cy = 0.0, cx = 0.0;
};

struct Components {
  LabelImage labels;  // 0 is background; region labels are 1-based
  std::vector<Region> regions;
};

// 8-connected labelling. Regions outside [min_area, max_area] are dropped
// (their pixels relabelled 0). Labels follow raster order of first pixel.
Components connected_components(const Mask& mask, std::size_t min_area = 1,
                                std::size_t max_area = std::numeric_limits<std::size_t>::max());

struct CharacterCrop {
  GrayImage patch;  // glyph pixels 1, background 0, target_size square
  PixelRect box;    // in plate coordinates
  std::size_t index = 0;
  std::size_t row = 0;
};

// Tight glyph patch -> centred on a square canvas with a small margin -> bilinear resize.
GrayImage normalize_glyph(const GrayImage& patch, int target_size);

// Rows by 1-D k-means (k <= 2) on vertical centres, top row first, each
// row left to right; each region's own pixels become its patch.
std::vector<CharacterCrop> order_and_crop(const Components& components, int target_size);

enum class SegmentationModel { ChanVese, Rsf };
const char* to_string(SegmentationModel model);

struct SegmentConfig {
  CvParams cv;
  RsfParams rsf;
  double min_area_fraction = 0.005;
  double max_area_fraction = 0.30;
  bool drop_border_regions = true;
  int target_size = 64;
  std::size_t min_chars = 4;
};

struct Segmentation {
  SegmentationModel model = SegmentationModel::ChanVese;
  Mask glyph_mask;
  Components components;
  std::vector<CharacterCrop> crops;
  bool fallback_used = false;
  bool degenerate = false;
};

// Minority phase of a two-phase mask, i.e. the glyph pixels.
Mask glyph_phase(const Mask& mask);

// Chan-Vese first; when it yields fewer than min_chars crops, RSF runs and
// the result with more in-range components wins. `force` skips the fallback.
Segmentation segment_characters(const GrayImage& plate, const SegmentConfig& config,
                                std::optional<SegmentationModel> force = std::nullopt);

}  // namespace blpnet
