#include "blpnet/synth.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "blpnet/segment.hpp"

namespace blpnet {

namespace {

using Point = Eigen::Vector2d;
using Stroke = std::vector<Point>;

std::vector<Stroke> skeleton(std::size_t cls) {
  Rng rng(mix_seed(0x676c797068ull, cls));
  auto clamp = [](Point p) { return Point(std::clamp(p.x(), 0.12, 0.88), std::clamp(p.y(), 0.12, 0.88)); };
  std::vector<Stroke> strokes;
  const std::size_t count = 2 + uniform_index(rng, 2);
  for (std::size_t s = 0; s < count; ++s) {
    Point start;
    if (strokes.empty()) {
      start = Point(uniform(rng, 0.2, 0.8), uniform(rng, 0.2, 0.8));
    } else {
      const auto& prev = strokes[uniform_index(rng, strokes.size())];
      start = prev[uniform_index(rng, prev.size())];
    }
    Stroke stroke{start};
    const std::size_t segments = 2 + uniform_index(rng, 2);
    for (std::size_t k = 0; k < segments; ++k) {
      const double angle = uniform(rng, 0.0, 6.283185307179586);
      const double len = uniform(rng, 0.25, 0.5);
      stroke.push_back(clamp(stroke.back() + len * Point(std::cos(angle), std::sin(angle))));
    }
    strokes.push_back(std::move(stroke));
  }
  return strokes;
}

double segment_distance(const Point& p, const Point& a, const Point& b) {
  const Point ab = b - a;
  const double len2 = ab.squaredNorm();
  const double t = len2 > 0 ? std::clamp((p - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
  return (p - (a + t * ab)).norm();
}

PixelRect tight_box(const Mask& m) {
  PixelRect r{static_cast<int>(m.cols()), static_cast<int>(m.rows()), 0, 0};
  for (Eigen::Index y = 0; y < m.rows(); ++y)
    for (Eigen::Index x = 0; x < m.cols(); ++x)
      if (m(y, x)) {
        r.x0 = std::min(r.x0, static_cast<int>(x));
        r.y0 = std::min(r.y0, static_cast<int>(y));
        r.x1 = std::max(r.x1, static_cast<int>(x) + 1);
        r.y1 = std::max(r.y1, static_cast<int>(y) + 1);
      }
  if (r.x1 <= r.x0) throw std::logic_error("empty glyph");
  return r;
}

Mask tight(const Mask& m) {
  const auto r = tight_box(m);
  return m.block(r.y0, r.x0, r.height(), r.width());
}

}  // namespace

Mask glyph_strokes(std::size_t cls, int size, Rng& rng, const GlyphStyle& style) {
  if (size < 4) throw std::invalid_argument("glyph_strokes: cell too small");
  auto strokes = skeleton(cls);
  for (auto& s : strokes)
    for (auto& p : s) p += style.jitter * Point(normal(rng), normal(rng));
  const double half = 0.5 * std::max(style.thickness, 1.5 / size);
  Mask m = Mask::Zero(size, size);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const Point p((x + 0.5) / size, (y + 0.5) / size);
      for (const auto& s : strokes) {
        bool hit = false;
        for (std::size_t k = 0; k + 1 < s.size() && !hit; ++k) hit = segment_distance(p, s[k], s[k + 1]) <= half;
        if (hit) {
          m(y, x) = 1;
          break;
        }
      }
    }
  return m;
}

GrayImage render_glyph(std::size_t cls, int size, Rng& rng, const GlyphStyle& style) {
  const Mask m = tight(glyph_strokes(cls, size, rng, style));
  return normalize_glyph(m.cast<float>(), size);
}

Dataset glyph_corpus(std::size_t classes, std::size_t per_class, std::uint64_t seed, int size,
                     const GlyphStyle& style) {
  Dataset d;
  for (std::size_t c = 0; c < classes; ++c)
    for (std::size_t i = 0; i < per_class; ++i) {
      Rng rng(mix_seed(seed, c, i));
      d.images.push_back(render_glyph(c, size, rng, style));
      d.labels.push_back(c);
    }
  return d;
}

PlateFixture render_plate(const std::vector<std::size_t>& classes, const PlateLayout& layout, Rng& rng,
                          const GlyphStyle& style) {
  if (classes.empty()) throw std::invalid_argument("render_plate: no characters");
  const std::size_t n = classes.size();
  const std::size_t top = layout.top_row == 0 || layout.top_row >= n ? n : layout.top_row;
  const int rows = top == n ? 1 : 2;

  std::vector<Mask> glyphs;
  for (const auto c : classes) glyphs.push_back(tight(glyph_strokes(c, layout.glyph_height, rng, style)));

  auto row_width = [&](std::size_t begin, std::size_t end) {
    int w = 0;
    for (std::size_t i = begin; i < end; ++i) w += static_cast<int>(glyphs[i].cols()) + (i > begin ? layout.gap : 0);
    return w;
  };
  const int width = 2 * layout.margin + std::max(row_width(0, top), row_width(top, n));
  const int height = 2 * layout.margin + rows * layout.glyph_height + (rows - 1) * layout.row_gap;

  PlateFixture f;
  f.image = GrayImage::Constant(height, width, layout.paper);
  f.glyphs = Mask::Zero(height, width);
  f.classes = classes;
  for (int r = 0; r < rows; ++r) {
    const std::size_t begin = r == 0 ? 0 : top, end = r == 0 ? top : n;
    int x = layout.margin + (width - 2 * layout.margin - row_width(begin, end)) / 2;
    const int cell_y = layout.margin + r * (layout.glyph_height + layout.row_gap);
    for (std::size_t i = begin; i < end; ++i) {
      const auto& g = glyphs[i];
      const int y = cell_y + (layout.glyph_height - static_cast<int>(g.rows())) / 2;
      f.glyphs.block(y, x, g.rows(), g.cols()) = g;
      f.boxes.push_back({x, y, x + static_cast<int>(g.cols()), y + static_cast<int>(g.rows())});
      f.rows.push_back(static_cast<std::size_t>(r));
      x += static_cast<int>(g.cols()) + layout.gap;
    }
  }
  f.image = (f.glyphs > 0).select(layout.ink, f.image);
  if (layout.noise > 0.0)
    for (Eigen::Index i = 0; i < f.image.size(); ++i) f.image.data()[i] += static_cast<float>(layout.noise * normal(rng));
  f.image = clamp01(f.image);
  return f;
}

GrayImage apply_bias_field(const GrayImage& image, double left, double right) {
  GrayImage out = image;
  const auto w = image.cols();
  for (Eigen::Index x = 0; x < w; ++x) {
    const double t = w > 1 ? static_cast<double>(x) / static_cast<double>(w - 1) : 0.0;
    out.col(x) *= static_cast<float>(left + (right - left) * t);
  }
  return out;
}

FrameKind mixed_frame_kind(std::size_t index) {
  switch (index % 4) {
    case 0: return FrameKind::Empty;
    case 1: return FrameKind::VehicleOnly;
    default: return FrameKind::VehicleWithPlate;
  }
}

SyntheticFrame render_frame(FrameKind kind, Rng& rng, const FrameOptions& o) {
  SyntheticFrame f;
  f.truth.kind = kind;
  f.image = GrayImage::Constant(o.height, o.width, 0.5f);
  for (Eigen::Index i = 0; i < f.image.size(); ++i) f.image.data()[i] += static_cast<float>(0.03 * normal(rng));
  const double W = o.width, H = o.height;
  if (kind != FrameKind::Empty) {
    const int vw = static_cast<int>(uniform(rng, 0.40, 0.60) * W);
    const int vh = static_cast<int>(uniform(rng, 0.45, 0.75) * H);
    const int vx = static_cast<int>(uniform(rng, 0.0, W - vw));
    const int vy = static_cast<int>(uniform(rng, 0.0, H - vh));
    f.image.block(vy, vx, vh, vw).setConstant(0.2f);
    f.truth.vehicle = {vx / W, vy / H, (vx + vw) / W, (vy + vh) / H};

    if (kind == FrameKind::VehicleWithPlate) {
      std::vector<std::size_t> classes;
      for (std::size_t i = 0; i < o.top_row + o.bottom_row; ++i) classes.push_back(uniform_index(rng, o.classes));
      PlateLayout layout;
      layout.glyph_height = 22;
      layout.gap = 6;
      layout.margin = 8;
      layout.row_gap = 6;
      layout.top_row = o.top_row;
      auto plate = render_plate(classes, layout, rng);
      const int pw = static_cast<int>(plate.image.cols()), ph = static_cast<int>(plate.image.rows());
      if (pw + 8 > vw || ph + 8 > vh) throw std::logic_error("render_frame: plate does not fit the vehicle");
      const int px = vx + (vw - pw) / 2 + static_cast<int>(uniform(rng, -0.15, 0.15) * (vw - pw));
      const int py = vy + static_cast<int>(uniform(rng, 0.45, 0.9) * (vh - ph));
      f.image.block(py, px, ph, pw) = plate.image;
      f.truth.plate = {px / W, py / H, (px + pw) / W, (py + ph) / H};
      f.truth.plate_in_vehicle = {double(px - vx) / vw, double(py - vy) / vh, double(px + pw - vx) / vw,
                                  double(py + ph - vy) / vh};
      f.truth.classes = std::move(classes);
    }
    for (Eigen::Index y = vy; y < vy + vh; ++y)
      for (Eigen::Index x = vx; x < vx + vw; ++x)
        if (f.image(y, x) == 0.2f) f.image(y, x) += static_cast<float>(0.02 * normal(rng));
  }
  f.image = clamp01(f.image);
  return f;
}

}  // namespace blpnet

namespace blpnet {

namespace {

BBox enlarge(const BBox& b, Rng& rng, double max_fraction) {
  const double w = b.x_max - b.x_min, h = b.y_max - b.y_min;
  return {std::max(0.0, b.x_min - uniform(rng, 0, max_fraction) * w), std::max(0.0, b.y_min - uniform(rng, 0, max_fraction) * h),
          std::min(1.0, b.x_max + uniform(rng, 0, max_fraction) * w), std::min(1.0, b.y_max + uniform(rng, 0, max_fraction) * h)};
}

// Expresses `inner` (frame coordinates) relative to `outer`.
BBox relative_to(const BBox& inner, const BBox& outer) {
  const double w = outer.x_max - outer.x_min, h = outer.y_max - outer.y_min;
  return {(inner.x_min - outer.x_min) / w, (inner.y_min - outer.y_min) / h, (inner.x_max - outer.x_min) / w,
          (inner.y_max - outer.y_min) / h};
}

}  // namespace

std::vector<HeadSample> vehicle_head_samples(std::size_t count, std::uint64_t seed, const FeatureProvider& backbone,
                                             const FrameOptions& options) {
  std::vector<HeadSample> out;
  for (std::size_t i = 0; i < count; ++i) {
    Rng rng(mix_seed(seed, i));
    const auto kind = i % 3 == 0 ? FrameKind::Empty : (i % 3 == 1 ? FrameKind::VehicleOnly : FrameKind::VehicleWithPlate);
    const auto frame = render_frame(kind, rng, options);
    HeadSample s;
    s.features = pooled_features(backbone.extract(frame.image));
    s.object = kind != FrameKind::Empty;
    s.box = frame.truth.vehicle;
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<HeadSample> plate_head_samples(std::size_t count, std::uint64_t seed, const FeatureProvider& backbone,
                                           const FrameOptions& options) {
  std::vector<HeadSample> out;
  for (std::size_t i = 0; i < count; ++i) {
    Rng rng(mix_seed(seed, i, 1));
    const auto kind = i % 2 == 0 ? FrameKind::VehicleOnly : FrameKind::VehicleWithPlate;
    const auto frame = render_frame(kind, rng, options);
    const BBox region = enlarge(frame.truth.vehicle, rng, 0.08);
    HeadSample s;
    s.features = pooled_features(backbone.extract(crop(frame.image, region)));
    s.object = kind == FrameKind::VehicleWithPlate;
    if (s.object) s.box = relative_to(frame.truth.plate, region);
    out.push_back(std::move(s));
  }
  return out;
}

ToyHeads train_toy_heads(std::size_t samples, std::uint64_t seed, const FrameOptions& options) {
  const ToyBackbone backbone;
  ToyHeads h;
  h.vehicle_head = build_detector_head(ToyBackbone::kChannels);
  h.plate_head = build_detector_head(ToyBackbone::kChannels);
  const std::size_t val = std::max<std::size_t>(samples / 5, 1);

  TrainingConfig vc;
  vc.optimizer = SgdConfig{0.05, 0.9};
  vc.batch_size = 32;
  vc.epochs = 200;
  vc.early_stop_patience = 20;
  vc.reduce_lr_patience = 8;
  vc.seed = mix_seed(seed, 1);
  const auto vtrain = vehicle_head_samples(samples, mix_seed(seed, 2), backbone, options);
  const auto vval = vehicle_head_samples(val, mix_seed(seed, 3), backbone, options);
  h.vehicle = train_detector_head(h.vehicle_head, vtrain, vval, vc);

  TrainingConfig pc;
  pc.optimizer = AdamConfig{};
  pc.batch_size = 64;
  pc.epochs = 200;
  pc.early_stop_patience = 20;
  pc.reduce_lr_patience = 8;
  pc.seed = mix_seed(seed, 4);
  const auto ptrain = plate_head_samples(samples, mix_seed(seed, 5), backbone, options);
  const auto pval = plate_head_samples(val, mix_seed(seed, 6), backbone, options);
  h.plate = train_detector_head(h.plate_head, ptrain, pval, pc);
  return h;
}

}  // namespace blpnet
