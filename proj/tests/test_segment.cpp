#include <doctest.h>

#include "blpnet/segment.hpp"
#include "blpnet/synth.hpp"

using namespace blpnet;

namespace {

// Exhaustive best single threshold under the Chan-Vese data term.
Mask threshold_oracle(const GrayImage& img) {
  double best = std::numeric_limits<double>::infinity();
  float best_t = 0.5f;
  for (int k = 1; k < 256; ++k) {
    const float t = static_cast<float>(k) / 256.0f;
    const auto in = (img > t);
    const double n1 = in.count(), n2 = static_cast<double>(img.size()) - n1;
    if (n1 == 0 || n2 == 0) continue;
    const double c1 = in.select(img, 0.0f).sum() / n1, c2 = (!in).select(img, 0.0f).sum() / n2;
    const double e = in.select((img - c1).square(), (img - c2).square()).cast<double>().sum();
    if (e < best) {
      best = e;
      best_t = t;
    }
  }
  return (img > best_t).cast<std::uint8_t>();
}

double agreement(const Mask& a, const Mask& b) {
  return static_cast<double>((a == b).count()) / static_cast<double>(a.size());
}

// Two-tone card (paper 0.9, ink 0.25) under a 0.3 -> 1.0 horizontal ramp.
std::pair<GrayImage, Mask> biased_card() {
  Rng rng(1);
  PlateLayout layout;
  layout.glyph_height = 40;
  layout.gap = 12;
  layout.margin = 12;
  const auto plate = render_plate({0, 1, 2, 3}, layout, rng);
  const GrayImage card = (plate.glyphs.cast<float>() > 0.5f).select(0.25f, GrayImage::Constant(plate.image.rows(), plate.image.cols(), 0.9f));
  return {apply_bias_field(card, 0.3, 1.0), plate.glyphs};
}

}  // namespace

TEST_SUITE("segment") {
  TEST_CASE("Chan-Vese on a noisy half split matches the threshold oracle") {
    Rng rng(4);
    GrayImage img(40, 60);
    for (Eigen::Index y = 0; y < img.rows(); ++y)
      for (Eigen::Index x = 0; x < img.cols(); ++x)
        img(y, x) = (x < 30 ? 0.25f : 0.75f) + static_cast<float>(0.05 * normal(rng));
    const auto r = chan_vese(img);
    CHECK_FALSE(r.degenerate);
    CHECK(agreement(r.mask, threshold_oracle(img)) >= 0.99);
    CHECK(r.c1 > r.c2);
    CHECK(r.c1 == doctest::Approx(0.75).epsilon(0.05));
  }

  TEST_CASE("Chan-Vese energy decreases between checkpoints") {
    Rng rng(2);
    const auto plate = render_plate({0, 1, 2, 3}, PlateLayout{}, rng);
    const auto r = chan_vese(plate.image);
    REQUIRE(r.energy.size() >= 2);
    CHECK(r.energy.back() < r.energy.front());
    CHECK(agreement(glyph_phase(r.mask), plate.glyphs) > 0.97);
  }

  TEST_CASE("constant input is degenerate for both models") {
    const GrayImage c = GrayImage::Constant(20, 30, 0.4f);
    CHECK(chan_vese(c).degenerate);
    CHECK(rsf(c).degenerate);
    const auto s = segment_characters(c, SegmentConfig{});
    CHECK(s.crops.empty());
  }

  TEST_CASE("connected components use 8-connectivity and area limits") {
    Mask m = Mask::Zero(6, 6);
    m(0, 0) = m(1, 1) = m(2, 2) = 1;  // diagonal chain
    m(4, 4) = 1;                      // isolated pixel
    const auto c = connected_components(m);
    REQUIRE(c.regions.size() == 2);
    CHECK(c.regions[0].area == 3);
    CHECK(c.regions[0].box == PixelRect{0, 0, 3, 3});
    CHECK(c.labels(1, 1) == 1);
    const auto f = connected_components(m, 2);
    CHECK(f.regions.size() == 1);
    CHECK(f.labels(4, 4) == 0);
  }

  TEST_CASE("two-row plates read top row first, left to right") {
    Rng rng(5);
    PlateLayout layout;
    layout.top_row = 2;
    const auto plate = render_plate({0, 1, 2, 3, 4, 5}, layout, rng);
    const auto s = segment_characters(plate.image, SegmentConfig{});
    REQUIRE(s.crops.size() == 6);
    for (std::size_t i = 0; i < 6; ++i) {
      CHECK(s.crops[i].row == plate.rows[i]);
      const auto& b = plate.boxes[i];
      const int cx = (s.crops[i].box.x0 + s.crops[i].box.x1) / 2, cy = (s.crops[i].box.y0 + s.crops[i].box.y1) / 2;
      CHECK((cx >= b.x0 && cx < b.x1 && cy >= b.y0 && cy < b.y1));
    }
  }

  TEST_CASE("normalized glyph patches are square and centred") {
    GrayImage bar = GrayImage::Ones(20, 4);
    const auto p = normalize_glyph(bar, 32);
    CHECK(p.rows() == 32);
    CHECK(p.cols() == 32);
    CHECK(p(16, 16) > 0.9f);
    CHECK(p(16, 2) == 0.0f);
  }

  TEST_CASE("RSF recovers glyphs under a strong bias field where Chan-Vese fails") {
    const auto [img, truth] = biased_card();
    const double cv = agreement(glyph_phase(chan_vese(img).mask), truth);
    const double rs = agreement(glyph_phase(rsf(img).mask), truth);
    CHECK(cv < 0.95);
    CHECK(rs >= 0.95);
  }

  TEST_CASE("segmentation falls back to RSF when Chan-Vese finds too few glyphs") {
    const auto [img, truth] = biased_card();
    const auto s = segment_characters(img, SegmentConfig{});
    CHECK(s.fallback_used);
    CHECK(s.model == SegmentationModel::Rsf);
    CHECK(s.crops.size() == 4);
  }
}
