#include <doctest.h>

#include <filesystem>
#include <numeric>
#include <set>
#include <sstream>

#include "blpnet/augment.hpp"
#include "blpnet/synth.hpp"
#include "blpnet/training.hpp"

using namespace blpnet;

namespace {

NetworkSpec small_spec(std::size_t classes) {
  return NetworkSpec({16, 16, 1}, {LayerSpec::conv2x2(4), LayerSpec::relu(), LayerSpec::maxpool2(), LayerSpec::flatten(),
                                   LayerSpec::dense(classes), LayerSpec::softmax()});
}

TrainingConfig small_config() {
  TrainingConfig c;
  c.input_shape = {16, 16, 1};
  c.batch_size = 8;
  c.epochs = 60;
  c.early_stop_patience = 60;
  c.seed = 2;
  c.optimizer = AdamConfig{0.01};
  return c;
}

std::vector<std::string> labels_of(std::size_t n, std::size_t classes) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back("k" + std::to_string(i % classes));
  return out;
}

}  // namespace

TEST_SUITE("training") {
  TEST_CASE("split sizes follow the ratios exactly") {
    const auto labels = labels_of(100, 5);
    const std::vector<double> r{0.8, 0.2};
    const auto s = split(labels, r, 1);
    CHECK(s.train.size() == 80);
    CHECK(s.validation.size() == 20);
    CHECK(s.test.empty());
    CHECK(s.encoder.size() == 5);

    const auto big = labels_of(15500, 60);
    const std::vector<double> r3{9900.0 / 15500.0, 2600.0 / 15500.0, 3000.0 / 15500.0};
    const auto s3 = split(big, r3, 7);
    CHECK(s3.train.size() == 9900);
    CHECK(s3.validation.size() == 2600);
    CHECK(s3.test.size() == 3000);
    std::set<std::size_t> all(s3.train.begin(), s3.train.end());
    all.insert(s3.validation.begin(), s3.validation.end());
    all.insert(s3.test.begin(), s3.test.end());
    CHECK(all.size() == 15500);
  }

  TEST_CASE("splits are seeded and validated") {
    const auto labels = labels_of(50, 2);
    const std::vector<double> r{0.5, 0.5};
    CHECK(split(labels, r, 3).train == split(labels, r, 3).train);
    CHECK(split(labels, r, 3).train != split(labels, r, 4).train);
    const std::vector<double> bad{0.5, 0.4};
    CHECK_THROWS(split(labels, bad, 1));
    CHECK_THROWS(split(std::vector<std::string>{}, r, 1));
  }

  TEST_CASE("label encoder is sorted and bijective") {
    const std::vector<std::string> l{"b", "a", "c", "a"};
    const LabelEncoder enc(l);
    CHECK(enc.size() == 3);
    CHECK(enc.encode("a") == 0);
    CHECK(enc.decode(2) == "c");
    CHECK_THROWS(enc.encode("z"));
  }

  TEST_CASE("augmentation: identity, determinism, and range") {
    Rng g(1);
    const auto img = render_glyph(2, 64, g);
    Rng a(5), b(5);
    CHECK((augment(img, AugmentConfig::none(), a) - img).abs().maxCoeff() == 0.0f);
    const auto cfg = AugmentConfig::detector();
    Rng c(9), d(9);
    const auto x = augment(img, cfg, c), y = augment(img, cfg, d);
    CHECK((x - y).abs().maxCoeff() == 0.0f);
    CHECK(x.minCoeff() >= 0.0f);
    CHECK(x.maxCoeff() <= 1.0f);
    AugmentConfig bad;
    bad.blur_sigma_min = 2;
    bad.blur_sigma_max = 1;
    CHECK_THROWS(bad.validate());
  }

  TEST_CASE("rotation leaves a centred disc nearly unchanged") {
    GrayImage disc(64, 64);
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x) disc(y, x) = std::hypot(y - 31.5, x - 31.5) < 16 ? 1.0f : 0.0f;
    AugmentConfig cfg = AugmentConfig::none();
    cfg.rotation_deg = 30;
    Rng rng(3);
    const auto r = augment(disc, cfg, rng);
    CHECK((r - disc).abs().mean() < 0.01f);
  }

  TEST_CASE("early stopping with a frozen model ends after patience + 1 epochs") {
    const auto data = glyph_corpus(2, 8, 1, 16);
    auto cfg = small_config();
    cfg.optimizer = AdamConfig{0.0};
    cfg.early_stop_patience = 3;
    cfg.reduce_lr_patience = 0;
    const auto r = train(small_spec(2), data, data, cfg, AugmentConfig::none());
    CHECK(r.early_stopped);
    CHECK(r.history.back().epoch == 4);
    CHECK(r.best_epoch == 0);
  }

  TEST_CASE("a small network memorizes a small corpus, reproducibly") {
    const auto data = glyph_corpus(3, 10, 4, 16);
    const auto cfg = small_config();
    const auto r1 = train(small_spec(3), data, data, cfg, AugmentConfig::none());
    CHECK(accuracy(small_spec(3), r1.params, data) > 0.95);
    CHECK(r1.history.back().val_loss < r1.history.front().val_loss);
    const auto r2 = train(small_spec(3), data, data, cfg, AugmentConfig::none());
    CHECK(r1.params == r2.params);
    std::ostringstream csv;
    write_history_csv(r1.history, csv);
    CHECK(csv.str().rfind("epoch,", 0) == 0);
  }

  TEST_CASE("gradient check on a small network in double precision") {
    const auto spec = small_spec(3);
    Rng rng(11);
    const auto params = init_params<double>(spec, rng);
    Tensor<double> input({16, 16, 1});
    for (auto& v : input.values()) v = uniform01(rng);
    const auto report = gradient_check(spec, params, input, 1, nullptr);
    CHECK(report.finite);
    CHECK(report.coordinates == 100);
    CHECK(report.max_relative_error < 1e-4);
  }

  TEST_CASE("corpus directories load with their labels") {
    const auto root = std::filesystem::temp_directory_path() / "blpnet_corpus_test";
    std::filesystem::remove_all(root);
    std::filesystem::create_directories(root / "ক");
    std::filesystem::create_directories(root / "১");
    Rng rng(1);
    write_pgm(render_glyph(0, 20, rng), root / "ক" / "a.pgm");
    write_pgm(render_glyph(1, 20, rng), root / "১" / "b.pgm");
    const auto c = load_corpus(root, 32);
    REQUIRE(c.images.size() == 2);
    CHECK(c.images[0].rows() == 32);
    std::filesystem::remove_all(root);
    CHECK_THROWS(load_corpus(root, 32));
  }
}
