#include <doctest.h>

#include "blpnet/deblur.hpp"
#include "blpnet/synth.hpp"

using namespace blpnet;

namespace {

Image<double> random_image(Eigen::Index h, Eigen::Index w, Rng& rng) {
  Image<double> x(h, w);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = uniform01(rng);
  return x;
}

}  // namespace

TEST_SUITE("deblur") {
  TEST_CASE("kernels are normalized") {
    for (const auto& k : default_kernel_bank()) k.validate();
    CHECK(BlurKernel::horizontal_motion(9).taps.cols() == 9);
    BlurKernel bad{Image<double>::Constant(1, 2, 0.7)};
    CHECK_THROWS(bad.validate());
  }

  TEST_CASE("convolution adjoint satisfies <Kx, y> = <x, K'y>") {
    Rng rng(5);
    for (const auto& k : {BlurKernel::horizontal_motion(5), BlurKernel::box(3, 4), BlurKernel::horizontal_motion(9)}) {
      const auto x = random_image(11, 13, rng), y = random_image(11, 13, rng);
      const double lhs = (convolve(x, k) * y).sum(), rhs = (x * convolve_adjoint(y, k)).sum();
      CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
    }
  }

  TEST_CASE("identity kernel and constant images") {
    Rng rng(1);
    const auto x = random_image(6, 7, rng);
    CHECK((convolve(x, BlurKernel::identity()) - x).abs().maxCoeff() < 1e-15);
    const Image<double> c = Image<double>::Constant(8, 8, 0.4);
    CHECK((convolve(c, BlurKernel::horizontal_motion(9)) - 0.4).abs().maxCoeff() < 1e-12);
    const auto k = BlurKernel::horizontal_motion(9);
    const double bound = operator_norm_sq(k, 6, 7);
    for (int i = 0; i < 5; ++i) {
      const auto v = random_image(6, 7, rng);
      CHECK(convolve(v, k).square().sum() / v.square().sum() <= bound + 1e-9);
    }
  }

  TEST_CASE("sharpness drops under blur and is zero for flat images") {
    Rng rng(2);
    const auto x = random_image(20, 20, rng);
    CHECK(sharpness(Image<double>::Constant(5, 5, 0.5)) == doctest::Approx(0.0));
    CHECK(sharpness(convolve(x, BlurKernel::box(3, 3))) < sharpness(x));
  }

  TEST_CASE("FFT round trip and a known transform") {
    std::vector<std::complex<double>> v = {1, 2, 3, 4, 0, 0, 0, 0}, orig = v;
    fft(v, false);
    CHECK(v[0].real() == doctest::Approx(10));
    fft(v, true);
    for (std::size_t i = 0; i < v.size(); ++i) CHECK(std::abs(v[i] - orig[i]) < 1e-12);
    std::vector<std::complex<double>> odd(6);
    CHECK_THROWS(fft(odd, false));
  }

  TEST_CASE("Wiener normal equations recover a known FIR restoration filter") {
    Rng rng(8);
    std::vector<double> blurred(400), reference(400);
    for (auto& b : blurred) b = normal(rng);
    const double a[3] = {0.7, -0.2, 0.1};
    for (std::size_t n = 0; n < blurred.size(); ++n)
      for (std::size_t i = 0; i < 3 && i <= n; ++i) reference[n] += a[i] * blurred[n - i];
    const auto f = wiener_fit(blurred, reference, 2);
    CHECK(f.taps.size() == 3);
    for (int i = 0; i < 3; ++i) CHECK(f.taps[i] == doctest::Approx(a[i]).epsilon(1e-9));
    CHECK(f.residual_mse < 1e-20);
    CHECK_FALSE(f.regularized);
    const std::vector<double> zeros(50, 0.0);
    CHECK(wiener_fit(zeros, zeros, 3).regularized);
  }

  TEST_CASE("Wiener deconvolution improves a blurred plate") {
    Rng rng(3);
    const auto plate = render_plate({0, 1, 2, 3}, PlateLayout{}, rng);
    const auto k = BlurKernel::horizontal_motion(5);
    const GrayImage blurred = convolve(plate.image.cast<double>(), k).cast<float>();
    const auto restored = wiener_deconvolve(blurred, k, 1e-3);
    CHECK(psnr(restored, plate.image) > psnr(blurred, plate.image));
  }

  TEST_CASE("Haar thresholded Landweber stays close to a sharp input") {
    Rng rng(4);
    const auto plate = render_plate({4, 5}, PlateLayout{}, rng);
    const auto r = haar_deblur(plate.image, BlurKernel::identity(), 0.0);
    CHECK(r.mse_vs_input < 1e-6);
  }

  TEST_CASE("FISTA objective is monotone and the solution beats the blurred input") {
    Rng rng(6);
    const auto plate = render_plate({1, 2, 3, 4}, PlateLayout{}, rng);
    const auto k = BlurKernel::horizontal_motion(9);
    const GrayImage blurred = convolve(plate.image.cast<double>(), k).cast<float>();
    FistaConfig cfg;
    const auto r = fista_deblur(blurred, k, cfg);
    for (std::size_t i = 1; i < r.objective.size(); ++i) CHECK(r.objective[i] <= r.objective[i - 1]);
    CHECK(psnr(r.image, plate.image) > psnr(blurred, plate.image) + 3.0);
    CHECK(r.image.minCoeff() >= 0.0f);
    CHECK(r.image.maxCoeff() <= 1.0f);
  }

  TEST_CASE("FISTA with negligible TV weight and the identity kernel returns the input") {
    Rng rng(7);
    const GrayImage x = random_image(9, 9, rng).cast<float>();
    FistaConfig cfg;
    cfg.lambda = 1e-7;
    const auto r = fista_deblur(x, BlurKernel::identity(), cfg);
    CHECK((r.image - x).abs().maxCoeff() < 1e-5f);
  }

  TEST_CASE("invalid FISTA settings are rejected") {
    FistaConfig cfg;
    cfg.lambda = -1;
    CHECK_THROWS(cfg.validate());
    cfg.lambda = 0.02;
    cfg.decay = 0.0;
    CHECK_THROWS(cfg.validate());
  }
}
