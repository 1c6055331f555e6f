#include <doctest.h>

#include <cstring>

#include "blpnet/image.hpp"

using namespace blpnet;

namespace {

std::vector<std::byte> bytes_of(const std::string& s) {
  std::vector<std::byte> b(s.size());
  std::memcpy(b.data(), s.data(), s.size());
  return b;
}

}  // namespace

TEST_SUITE("image") {
  TEST_CASE("ASCII and binary PGM decode") {
    const auto a = decode_pnm(bytes_of("P2\n# comment\n2 2\n255\n0 255\n51 102\n"));
    CHECK(a.rows() == 2);
    CHECK(a(0, 1) == doctest::Approx(1.0));
    CHECK(a(1, 0) == doctest::Approx(0.2));
    GrayImage img(3, 4);
    for (Eigen::Index i = 0; i < img.size(); ++i) img.data()[i] = static_cast<float>(i) / 11.0f;
    const auto back = decode_pnm(encode_pgm(img));
    CHECK((back - img).abs().maxCoeff() <= 0.5f / 255.0f + 1e-6f);
  }

  TEST_CASE("PPM is reduced to luma") {
    std::string s = "P6\n1 1\n255\n";
    s += static_cast<char>(255);
    s += static_cast<char>(0);
    s += static_cast<char>(0);
    CHECK(decode_pnm(bytes_of(s))(0, 0) == doctest::Approx(0.299).epsilon(1e-3));
  }

  TEST_CASE("corrupt data is a decode error") {
    CHECK_THROWS_AS(decode_pnm(bytes_of("P5\n4 4\n255\nab")), ImageDecodeError);
    CHECK_THROWS_AS(decode_pnm(bytes_of("hello")), ImageDecodeError);
    CHECK_THROWS_AS(read_image("/nonexistent/frame.pgm"), ImageDecodeError);
  }

  TEST_CASE("bilinear resize preserves constants and same-size images") {
    const GrayImage c = GrayImage::Constant(7, 9, 0.3f);
    CHECK((resize_bilinear(c, 13, 5) - 0.3f).abs().maxCoeff() < 1e-6f);
    GrayImage r = GrayImage::Random(6, 6).abs();
    CHECK((resize_bilinear(r, 6, 6) - r).abs().maxCoeff() < 1e-6f);
  }

  TEST_CASE("identity warp and crop") {
    GrayImage r = GrayImage::Random(5, 8).abs();
    Eigen::Matrix<double, 2, 3> id;
    id << 1, 0, 0, 0, 1, 0;
    CHECK((warp_affine(r, id, 0.0f) - r).abs().maxCoeff() < 1e-6f);
    const auto c = crop(r, PixelRect{2, 1, 5, 4});
    CHECK(c.rows() == 3);
    CHECK(c(0, 0) == r(1, 2));
    CHECK_THROWS(crop(r, PixelRect{0, 0, 9, 2}));
  }
}
