#include <doctest.h>

#include <cmath>

#include "blpnet/tensor.hpp"

using namespace blpnet;

namespace {

Tensor<double> random_tensor(Shape shape, Rng& rng) {
  Tensor<double> t(std::move(shape));
  for (auto& v : t.values()) v = uniform(rng, -1.0, 1.0);
  return t;
}

double dot(const Tensor<double>& a, const Tensor<double>& b) { return a.vector().dot(b.vector()); }

// Central difference of <f(x), w> with respect to every element of x.
template <typename F>
Tensor<double> numeric_grad(Tensor<double> x, const Tensor<double>& w, F f, double h = 1e-3) {
  Tensor<double> g(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double x0 = x[i];
    x[i] = x0 + h;
    const double plus = dot(f(x), w);
    x[i] = x0 - h;
    const double minus = dot(f(x), w);
    x[i] = x0;
    g[i] = (plus - minus) / (2 * h);
  }
  return g;
}

double max_rel(const Tensor<double>& a, const Tensor<double>& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(a[i] - b[i]) / std::max({std::abs(a[i]), std::abs(b[i]), 1e-8}));
  return m;
}

}  // namespace

TEST_SUITE("tensor") {
  TEST_CASE("conv2d shapes and a hand-computed value") {
    Tensor<float> in({3, 3, 1}, std::vector<float>{1, 2, 3, 4, 5, 6, 7, 8, 9});
    auto k = ConvKernel<float>::zeros(2, 2, 1, 1);
    k.weights.fill(1.0f);
    k.bias[0] = 0.5f;
    const auto out = conv2d(in, k);
    CHECK(out.shape() == Shape{2, 2, 1});
    CHECK(out.at(0, 0, 0) == doctest::Approx(12.5));
    CHECK(out.at(1, 1, 0) == doctest::Approx(28.5));

    Tensor<float> big({64, 64, 1});
    CHECK(conv2d(big, ConvKernel<float>::zeros(2, 2, 1, 16)).shape() == Shape{63, 63, 16});
    CHECK(ConvKernel<float>::zeros(2, 2, 1, 16).parameter_count() == 80);
    CHECK(ConvKernel<float>::zeros(2, 2, 128, 256).parameter_count() == 131328);
  }

  TEST_CASE("conv2d rejects mismatched channels") {
    Tensor<float> in({4, 4, 2});
    CHECK_THROWS_AS(conv2d(in, ConvKernel<float>::zeros(2, 2, 1, 3)), ShapeError);
  }

  TEST_CASE("maxpool2 picks window maxima and drops the odd edge") {
    Tensor<float> in({4, 4, 1});
    for (std::size_t i = 0; i < 16; ++i) in[i] = static_cast<float>(i + 1);
    const auto r = maxpool2(in);
    CHECK(r.output.shape() == Shape{2, 2, 1});
    CHECK(r.output[0] == 6);
    CHECK(r.output[1] == 8);
    CHECK(r.output[2] == 14);
    CHECK(r.output[3] == 16);
    CHECK(maxpool2(Tensor<float>({63, 63, 16})).output.shape() == Shape{31, 31, 16});
    const auto flat = maxpool2(Tensor<float>({5, 5, 1}, 3.0f));
    for (const float v : flat.output.values()) CHECK(v == 3.0f);
  }

  TEST_CASE("dense with identity weights is the identity") {
    Tensor<float> x({3}, std::vector<float>{1, -2, 3});
    Tensor<float> w({3, 3});
    for (std::size_t i = 0; i < 3; ++i) w[i * 3 + i] = 1;
    CHECK(dense(x, w, Tensor<float>({3})) == x);
  }

  TEST_CASE("softmax of a constant vector is uniform and rejects non-finite input") {
    const auto p = softmax(Tensor<float>({60}, 2.5f));
    for (const float v : p.values()) CHECK(v == doctest::Approx(1.0 / 60));
    Tensor<float> big({3}, std::vector<float>{1000, 1000, -1000});
    const auto q = softmax(big);
    CHECK(q[0] == doctest::Approx(0.5));
    Tensor<float> bad({2}, std::vector<float>{1, NAN});
    CHECK_THROWS_AS(softmax(bad), NonFiniteError);
  }

  TEST_CASE("dropout is the identity at inference and at rate 0") {
    Rng rng(3);
    Tensor<float> x({100}, 1.0f);
    CHECK(dropout(x, 0.5, rng, false).output == x);
    CHECK(dropout(x, 0.0, rng, true).output == x);
    const auto d = dropout(x, 0.25, rng, true);
    for (const float v : d.output.values()) CHECK((v == 0.0f || v == doctest::Approx(1.0 / 0.75)));
  }

  TEST_CASE("global average pooling") {
    Tensor<float> x({10, 10, 1056}, 0.5f);
    const auto g = global_avg_pool(x);
    CHECK(g.shape() == Shape{1056});
    CHECK(g[1055] == doctest::Approx(0.5));
  }

  TEST_CASE("backward passes match central differences") {
    Rng rng(42);
    SUBCASE("conv2d") {
      const auto x = random_tensor({5, 4, 3}, rng);
      ConvKernel<double> k{random_tensor({2, 2, 3, 2}, rng), random_tensor({2}, rng)};
      const auto w = random_tensor({4, 3, 2}, rng);
      const auto g = conv2d_backward(x, k, w);
      CHECK(max_rel(g.input, numeric_grad(x, w, [&](const Tensor<double>& t) { return conv2d(t, k); })) < 1e-4);
      const auto gw = numeric_grad(k.weights, w, [&](const Tensor<double>& t) {
        return conv2d(x, ConvKernel<double>{t, k.bias});
      });
      CHECK(max_rel(g.weights, gw) < 1e-4);
      const auto gb = numeric_grad(k.bias, w, [&](const Tensor<double>& t) {
        return conv2d(x, ConvKernel<double>{k.weights, t});
      });
      CHECK(max_rel(g.bias, gb) < 1e-4);
    }
    SUBCASE("dense") {
      const auto x = random_tensor({7}, rng);
      const auto W = random_tensor({7, 4}, rng), b = random_tensor({4}, rng), w = random_tensor({4}, rng);
      const auto g = dense_backward(x, W, w);
      CHECK(max_rel(g.input, numeric_grad(x, w, [&](const Tensor<double>& t) { return dense(t, W, b); })) < 1e-4);
      CHECK(max_rel(g.weights, numeric_grad(W, w, [&](const Tensor<double>& t) { return dense(x, t, b); })) < 1e-4);
    }
    SUBCASE("softmax") {
      const auto x = random_tensor({6}, rng), w = random_tensor({6}, rng);
      const auto g = softmax_backward(softmax(x), w);
      CHECK(max_rel(g, numeric_grad(x, w, [](const Tensor<double>& t) { return softmax(t); })) < 1e-4);
    }
    SUBCASE("maxpool and global average pooling") {
      const auto x = random_tensor({4, 6, 2}, rng);
      const auto w = random_tensor({2, 3, 2}, rng);
      const auto r = maxpool2(x);
      CHECK(max_rel(maxpool2_backward(x.shape(), r.argmax, w),
                    numeric_grad(x, w, [](const Tensor<double>& t) { return maxpool2(t).output; })) < 1e-4);
      const auto wg = random_tensor({2}, rng);
      CHECK(max_rel(global_avg_pool_backward(x.shape(), wg),
                    numeric_grad(x, wg, [](const Tensor<double>& t) { return global_avg_pool(t); })) < 1e-4);
    }
  }
}
