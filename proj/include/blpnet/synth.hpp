#pragma once

#include <cstddef>
#include <vector>

#include "blpnet/detector.hpp"
#include "blpnet/image.hpp"
#include "blpnet/random.hpp"
#include "blpnet/training.hpp"

namespace blpnet {

/// Procedural stand-in glyphs: each class is a fixed, connected set of thick
/// polyline strokes derived from the class index; samples jitter the vertices.
struct GlyphStyle {
  double thickness = 0.11;  // stroke width as a fraction of the cell
  double jitter = 0.03;     // vertex noise, fraction of the cell
};

// Binary glyph strokes filling a size x size cell (not normalized).
Mask glyph_strokes(std::size_t cls, int size, Rng& rng, const GlyphStyle& style = {});

// A normalized training sample: strokes -> tight box -> normalize_glyph.
GrayImage render_glyph(std::size_t cls, int size, Rng& rng, const GlyphStyle& style = {});

// per_class samples of each class in [0, classes), class-major order.
Dataset glyph_corpus(std::size_t classes, std::size_t per_class, std::uint64_t seed, int size = 64,
                     const GlyphStyle& style = {});

struct PlateLayout {
  int glyph_height = 32;
  int gap = 8;     // minimum horizontal space between glyph boxes
  int margin = 10;
  int row_gap = 8;
  std::size_t top_row = 0;  // glyphs on the first row; 0 puts everything on one row
  float paper = 0.95f;
  float ink = 0.05f;
  double noise = 0.0;  // Gaussian noise std
};

struct PlateFixture {
  GrayImage image;
  Mask glyphs;  // ground-truth ink mask
  std::vector<std::size_t> classes;
  std::vector<std::size_t> rows;
  std::vector<PixelRect> boxes;
};

PlateFixture render_plate(const std::vector<std::size_t>& classes, const PlateLayout& layout, Rng& rng,
                          const GlyphStyle& style = {});

// Multiplies by a horizontal ramp from `left` to `right`.
GrayImage apply_bias_field(const GrayImage& image, double left, double right);

enum class FrameKind { Empty, VehicleOnly, VehicleWithPlate };

struct FrameTruth {
  FrameKind kind = FrameKind::Empty;
  BBox vehicle;           // frame coordinates
  BBox plate;             // frame coordinates
  BBox plate_in_vehicle;  // vehicle-crop coordinates
  std::vector<std::size_t> classes;
};

struct SyntheticFrame {
  GrayImage image;
  FrameTruth truth;
};

struct FrameOptions {
  int width = 640;
  int height = 360;
  std::size_t classes = 10;  // glyph classes drawn on plates
  std::size_t top_row = 2;
  std::size_t bottom_row = 4;
};

SyntheticFrame render_frame(FrameKind kind, Rng& rng, const FrameOptions& options = {});

// Cycles empty, vehicle-only, plate, plate.
FrameKind mixed_frame_kind(std::size_t index);

// Whole frames with vehicle boxes; empty frames are the negatives.
std::vector<HeadSample> vehicle_head_samples(std::size_t count, std::uint64_t seed, const FeatureProvider& backbone,
                                             const FrameOptions& options = {});

// Vehicle crops (ground truth boxes, randomly enlarged) with plate boxes in
// crop coordinates; plate-less vehicles are the negatives.
std::vector<HeadSample> plate_head_samples(std::size_t count, std::uint64_t seed, const FeatureProvider& backbone,
                                           const FrameOptions& options = {});

struct ToyHeads {
  DetectorHead vehicle_head, plate_head;
  HeadTrainResult vehicle, plate;
};

// Trains both heads over ToyBackbone features: SGD for the vehicle head,
// Adam for the plate head.
ToyHeads train_toy_heads(std::size_t samples, std::uint64_t seed, const FrameOptions& options = {});

}  // namespace blpnet
