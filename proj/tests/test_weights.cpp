#include <doctest.h>

#include <cstring>
#include <filesystem>

#include "blpnet/ocr.hpp"
#include "blpnet/weights_io.hpp"

using namespace blpnet;

namespace {

WeightFormatErrc error_of(std::span<const std::byte> bytes) {
  try {
    decode_weights(bytes);
  } catch (const WeightFormatError& e) {
    return e.code();
  }
  FAIL("decode unexpectedly succeeded");
  return WeightFormatErrc::Io;
}

ParameterStore<float> sample_store() {
  NetworkSpec spec({4, 4, 1}, {LayerSpec::conv2x2(3), LayerSpec::flatten(), LayerSpec::dense(2)});
  Rng rng(11);
  return init_params<float>(spec, rng);
}

}  // namespace

TEST_SUITE("weights") {
  TEST_CASE("round trip is bitwise identical") {
    const auto p = sample_store();
    const auto bytes = encode_weights(p);
    const auto q = decode_weights(bytes);
    REQUIRE(q.tensors.size() == p.tensors.size());
    for (std::size_t i = 0; i < p.tensors.size(); ++i) {
      CHECK(q.tensors[i].name == p.tensors[i].name);
      CHECK(q.tensors[i].value.shape() == p.tensors[i].value.shape());
      CHECK(std::memcmp(q.tensors[i].value.data(), p.tensors[i].value.data(), p.tensors[i].value.size() * 4) == 0);
    }
  }

  TEST_CASE("file round trip") {
    const auto path = std::filesystem::temp_directory_path() / "blpnet_weights_test.blpw";
    const auto p = sample_store();
    save_weights(p, path);
    CHECK(load_weights(path) == p);
    std::filesystem::remove(path);
    CHECK_THROWS_AS(load_weights(path), WeightFormatError);
  }

  TEST_CASE("each corruption class has its own error") {
    const auto good = encode_weights(sample_store());
    auto bad_magic = good;
    bad_magic[0] = std::byte{'X'};
    CHECK(error_of(bad_magic) == WeightFormatErrc::BadMagic);
    auto bad_version = good;
    bad_version[4] = std::byte{2};
    CHECK(error_of(bad_version) == WeightFormatErrc::VersionMismatch);
    const std::span<const std::byte> truncated(good.data(), good.size() - 3);
    CHECK(error_of(truncated) == WeightFormatErrc::Truncated);
    auto trailing = good;
    trailing.push_back(std::byte{0});
    CHECK(error_of(trailing) == WeightFormatErrc::Malformed);
    CHECK(error_of(std::span<const std::byte>(good.data(), 2)) == WeightFormatErrc::Truncated);
  }

  TEST_CASE("empty store encodes as a bare header") {
    const auto bytes = encode_weights(ParameterStore<float>{});
    CHECK(bytes.size() == 12);
    CHECK(decode_weights(bytes).tensors.empty());
  }

  TEST_CASE("feature container") {
    const auto path = std::filesystem::temp_directory_path() / "blpnet_features_test.blpw";
    Tensor<float> f({2, 2, 3}, 0.25f);
    save_features(f, path);
    CHECK(load_features(path) == f);
    std::filesystem::remove(path);
  }
}
