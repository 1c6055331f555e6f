#include <doctest.h>

#include "blpnet/detector.hpp"
#include "blpnet/nn.hpp"
#include "blpnet/ocr.hpp"
#include "blpnet/training.hpp"

using namespace blpnet;

namespace {

NetworkSpec conv_net() {
  return NetworkSpec({8, 8, 2}, {LayerSpec::conv2x2(4), LayerSpec::relu(), LayerSpec::maxpool2(), LayerSpec::conv2x2(6),
                                 LayerSpec::relu(), LayerSpec::maxpool2(), LayerSpec::flatten(), LayerSpec::dense(5),
                                 LayerSpec::softmax()});
}

Tensor<double> random_input(const Shape& s, Rng& rng) {
  Tensor<double> t(s);
  for (auto& v : t.values()) v = uniform(rng, 0.0, 1.0);
  return t;
}

}  // namespace

TEST_SUITE("nn") {
  TEST_CASE("OCR topology shapes and counts") {
    const auto spec = ocr_network_spec();
    const auto shapes = propagate_shapes(spec);
    CHECK(shapes.front() == Shape{63, 63, 16});
    CHECK(shapes.back() == Shape{60});
    const auto counts = param_count(spec);
    std::vector<std::size_t> parametric;
    for (const auto& l : counts.layers)
      if (l.params) parametric.push_back(l.params);
    CHECK(parametric == std::vector<std::size_t>{80, 2080, 8256, 32896, 131328, 65792, 131584, 30780});
    CHECK(counts.total == 402796);
  }

  TEST_CASE("layer names are assigned per kind") {
    const auto spec = conv_net();
    CHECK(spec.layers[0].name == "conv2d_0");
    CHECK(spec.layers[3].name == "conv2d_1");
    CHECK(spec.layers[7].name == "dense_0");
  }

  TEST_CASE("a 16x16 input cannot pass five valid convolutions") {
    CHECK_THROWS_AS(propagate_shapes(ocr_network_spec(60, 16)), ShapeError);
  }

  TEST_CASE("dense count rule") {
    NetworkSpec s({1056}, {LayerSpec::dense(256)});
    CHECK(param_count(s).total == 270592);
    NetworkSpec t({256}, {LayerSpec::dense(512)});
    CHECK(param_count(t).total == 131584);
  }

  TEST_CASE("init_params names and validation") {
    Rng rng(1);
    const auto spec = conv_net();
    auto p = init_params<float>(spec, rng);
    CHECK(p.tensors.size() == 6);
    CHECK(p.tensors[0].name == "conv2d_0/kernel");
    CHECK(p.tensors[1].name == "conv2d_0/bias");
    validate_params(spec, p);
    p.tensors[2].value = Tensor<float>({3});
    CHECK_THROWS_AS(validate_params(spec, p), ShapeError);
  }

  TEST_CASE("forward output is a simplex") {
    Rng rng(2);
    const auto spec = conv_net();
    const auto p = init_params<double>(spec, rng);
    const auto out = predict(spec, p, random_input(spec.input_shape, rng));
    CHECK(out.vector().sum() == doctest::Approx(1.0).epsilon(1e-12));
  }

  TEST_CASE("gradient check: dense-only network") {
    Rng rng(3);
    NetworkSpec spec({6}, {LayerSpec::dense(5), LayerSpec::relu(), LayerSpec::dense(3), LayerSpec::softmax()});
    const auto p = init_params<double>(spec, rng);
    const auto r = gradient_check(spec, p, random_input({6}, rng), 1, nullptr, {60, 1e-5, 7});
    CHECK(r.coordinates >= 50);
    CHECK(r.max_relative_error < 1e-5);
  }

  TEST_CASE("gradient check: conv + pool + dense network") {
    Rng rng(4);
    const auto spec = conv_net();
    auto p = init_params<double>(spec, rng);
    const auto r = gradient_check(spec, p, random_input(spec.input_shape, rng), 2, nullptr, {120, 1e-5, 9});
    CHECK(r.coordinates == 120);
    CHECK(r.max_relative_error < 1e-4);
  }

  TEST_CASE("gradient check: regression head with zero input and zero target stays finite") {
    const auto head = build_detector_head(8);
    Rng rng(5);
    const auto p = init_params<float>(head.bbox_branch, rng).cast<double>();
    const Tensor<double> zero_in({8}), zero_target({4});
    const auto r = gradient_check(head.bbox_branch, p, zero_in, 0, &zero_target, {30, 1e-5, 1});
    CHECK(r.finite);
    CHECK(std::isfinite(r.max_relative_error));
  }

  TEST_CASE("non-finite gradients abort the step without touching parameters") {
    Rng rng(6);
    NetworkSpec spec({3}, {LayerSpec::dense(2)});
    auto p = init_params<float>(spec, rng);
    const auto before = p;
    auto g = p.zeros_like();
    g.tensors[1].value[0] = NAN;
    OptimizerState<float> state;
    CHECK_THROWS_AS(sgd_step(p, g, SgdConfig{}, state), NonFiniteError);
    CHECK_THROWS_AS(adam_step(p, g, AdamConfig{}, 1, state), NonFiniteError);
    CHECK(p == before);
  }

  TEST_CASE("adam first step moves each weight by lr against the gradient sign") {
    NetworkSpec spec({2}, {LayerSpec::dense(1)});
    auto p = zero_params<double>(spec);
    auto g = p.zeros_like();
    g.tensors[0].value[0] = 0.3;
    g.tensors[0].value[1] = -2.0;
    OptimizerState<double> state;
    adam_step(p, g, AdamConfig{0.01}, 1, state);
    CHECK(p.tensors[0].value[0] == doctest::Approx(-0.01).epsilon(1e-6));
    CHECK(p.tensors[0].value[1] == doctest::Approx(0.01).epsilon(1e-6));
  }

  TEST_CASE("sgd with momentum accumulates velocity") {
    NetworkSpec spec({1}, {LayerSpec::dense(1)});
    auto p = zero_params<double>(spec);
    auto g = p.zeros_like();
    g.tensors[0].value[0] = 1.0;
    OptimizerState<double> state;
    sgd_step(p, g, SgdConfig{0.1, 0.9}, state);
    sgd_step(p, g, SgdConfig{0.1, 0.9}, state);
    CHECK(p.tensors[0].value[0] == doctest::Approx(-0.1 - 0.19));
  }

  TEST_CASE("backward rejects a cache from another network") {
    Rng rng(8);
    const auto spec = conv_net();
    const auto p = init_params<double>(spec, rng);
    NetworkSpec other({3}, {LayerSpec::dense(5), LayerSpec::softmax()});
    const auto q = init_params<double>(other, rng);
    const auto acts = forward(other, q, random_input({3}, rng), false, rng);
    CHECK_THROWS_AS(backward(spec, p, acts, Tensor<double>({5})), ShapeError);
  }
}
