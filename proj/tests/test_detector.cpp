#include <doctest.h>

#include <filesystem>

#include "blpnet/detector.hpp"
#include "blpnet/weights_io.hpp"

using namespace blpnet;

TEST_SUITE("detector") {
  TEST_CASE("head topology reproduces the printed counts for 1056 features") {
    const auto head = build_detector_head(1056);
    std::vector<std::size_t> cls, box;
    for (const auto& l : param_count(head.class_branch).layers)
      if (l.params) cls.push_back(l.params);
    for (const auto& l : param_count(head.bbox_branch).layers)
      if (l.params) box.push_back(l.params);
    CHECK(cls == std::vector<std::size_t>{270592, 32896, 8256, 2080, 66});
    CHECK(box == std::vector<std::size_t>{270592, 32896, 8256, 2080, 132});
    CHECK(param_count(head.class_branch).total + param_count(head.bbox_branch).total == 627846);
    CHECK(build_detector_head(kPlateFeatureDim).feature_dim == 2048);
  }

  TEST_CASE("zero-weight head gives even class odds and no detection above 0.5") {
    const auto head = build_detector_head(12);
    HeadParams p{zero_params<float>(head.class_branch), zero_params<float>(head.bbox_branch)};
    const ToyBackbone backbone;
    const GrayImage img = GrayImage::Constant(40, 60, 0.5f);
    const auto out = run_head(head, p, backbone.extract(img));
    CHECK(out.class_probs[0] == doctest::Approx(0.5));
    CHECK_FALSE(detect(img, backbone, head, p, 0.6, Stage::Vehicle).has_value());
    CHECK(detect(img, backbone, head, p, 0.4, Stage::Vehicle).has_value());
    CHECK_THROWS(detect(img, backbone, head, p, 1.5, Stage::Vehicle));
  }

  TEST_CASE("toy backbone responds to dark and bright regions") {
    const ToyBackbone backbone;
    GrayImage img = GrayImage::Constant(64, 64, 0.5f);
    CHECK(backbone.extract(img).vector().cwiseAbs().maxCoeff() == 0.0f);
    img.block(0, 0, 32, 32).setConstant(0.1f);
    const auto f = pooled_features(backbone.extract(img));
    CHECK(f.shape() == Shape{12});
    CHECK(f[0] > 0.1f);
    CHECK(f[1] < 0.0f);  // dark mass sits left of centre
    CHECK(f[6] == 0.0f);
  }

  TEST_CASE("box mapping, pixels and crops") {
    const BBox inner{0.5, 0.5, 1.0, 1.0}, outer{0.2, 0.0, 0.6, 0.5};
    const auto m = inner.within(outer);
    CHECK(m.x_min == doctest::Approx(0.4));
    CHECK(m.y_max == doctest::Approx(0.5));
    CHECK(bbox_to_pixels({0.1, 0.2, 0.5, 0.6}, 100, 50) == PixelRect{10, 10, 50, 30});
    CHECK_THROWS_AS(bbox_to_pixels({0.3, 0.3, 0.301, 0.6}, 100, 50), DegenerateCropError);
    CHECK(bbox_mse({0, 0, 1, 1}, {0, 0, 1, 0.6}) == doctest::Approx(0.04));
  }

  TEST_CASE("head parameters survive a file round trip") {
    const auto head = build_detector_head(12);
    Rng rng(3);
    const auto p = init_head_params(head, rng);
    const auto path = std::filesystem::temp_directory_path() / "blpnet_head_test.blpw";
    save_weights(join_head_params(p), path);
    const auto [h2, p2] = load_head(path);
    CHECK(h2.feature_dim == 12);
    CHECK(p2.class_params == p.class_params);
    CHECK(p2.bbox_params == p.bbox_params);
    std::filesystem::remove(path);
  }

  TEST_CASE("file feature provider serves stored features") {
    const auto path = std::filesystem::temp_directory_path() / "blpnet_feat_test.blpw";
    save_features(Tensor<float>({10, 10, 1056}, 1.0f), path);
    const FileFeatureProvider provider(path);
    CHECK(provider.output_shape() == Shape{10, 10, 1056});
    CHECK(pooled_features(provider.extract(GrayImage(1, 1))).size() == 1056);
    std::filesystem::remove(path);
  }
}
