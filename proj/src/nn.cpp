#include "blpnet/nn.hpp"

#include <cmath>
#include <map>

namespace blpnet {

const char* layer_kind_name(LayerKind kind) {
  switch (kind) {
    case LayerKind::Conv2x2: return "Conv2D";
    case LayerKind::MaxPool2: return "MaxPooling2D";
    case LayerKind::Dropout: return "Dropout";
    case LayerKind::Dense: return "Dense";
    case LayerKind::Relu: return "ReLU";
    case LayerKind::Softmax: return "Softmax";
    case LayerKind::Flatten: return "Flatten";
    case LayerKind::GlobalAvgPool: return "GlobalAveragePooling2D";
  }
  return "?";
}

LayerSpec LayerSpec::conv2x2(std::size_t out_channels, std::string name) {
  return {LayerKind::Conv2x2, out_channels, 0.0, std::move(name)};
}
LayerSpec LayerSpec::dense(std::size_t out_units, std::string name) {
  return {LayerKind::Dense, out_units, 0.0, std::move(name)};
}
LayerSpec LayerSpec::dropout(double rate, std::string name) { return {LayerKind::Dropout, 0, rate, std::move(name)}; }
LayerSpec LayerSpec::maxpool2(std::string name) { return {LayerKind::MaxPool2, 0, 0.0, std::move(name)}; }
LayerSpec LayerSpec::relu(std::string name) { return {LayerKind::Relu, 0, 0.0, std::move(name)}; }
LayerSpec LayerSpec::softmax(std::string name) { return {LayerKind::Softmax, 0, 0.0, std::move(name)}; }
LayerSpec LayerSpec::flatten(std::string name) { return {LayerKind::Flatten, 0, 0.0, std::move(name)}; }
LayerSpec LayerSpec::global_avg_pool(std::string name) {
  return {LayerKind::GlobalAvgPool, 0, 0.0, std::move(name)};
}

namespace {

std::string default_prefix(LayerKind kind) {
  switch (kind) {
    case LayerKind::Conv2x2: return "conv2d";
    case LayerKind::MaxPool2: return "max_pooling2d";
    case LayerKind::Dropout: return "dropout";
    case LayerKind::Dense: return "dense";
    case LayerKind::Relu: return "relu";
    case LayerKind::Softmax: return "softmax";
    case LayerKind::Flatten: return "flatten";
    case LayerKind::GlobalAvgPool: return "global_average_pooling2d";
  }
  return "layer";
}

std::string layer_label(const NetworkSpec& spec, std::size_t i) {
  return "layer " + std::to_string(i) + " (" + spec.layers[i].name + ")";
}

}  // namespace

NetworkSpec::NetworkSpec(Shape input, std::vector<LayerSpec> layer_list)
    : input_shape(std::move(input)), layers(std::move(layer_list)) {
  if (input_shape.empty()) throw std::invalid_argument("network input shape is empty");
  for (auto d : input_shape)
    if (d == 0) throw std::invalid_argument("network input dimension must be positive");
  std::map<LayerKind, std::size_t> counters;
  for (auto& layer : layers) {
    if (layer.parametric() && layer.units == 0)
      throw std::invalid_argument("layer output size must be at least 1");
    if (layer.kind == LayerKind::Dropout && !(layer.rate >= 0.0 && layer.rate < 1.0))
      throw std::invalid_argument("dropout rate must lie in [0, 1)");
    const std::size_t n = counters[layer.kind]++;
    if (layer.name.empty()) layer.name = default_prefix(layer.kind) + "_" + std::to_string(n);
  }
}

std::vector<Shape> propagate_shapes(const NetworkSpec& spec) {
  std::vector<Shape> out;
  Shape cur = spec.input_shape;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const auto& l = spec.layers[i];
    auto fail = [&](const std::string& why) {
      throw ShapeError(layer_label(spec, i) + ": " + why + ", input " + to_string(cur));
    };
    switch (l.kind) {
      case LayerKind::Conv2x2:
        if (cur.size() != 3 || cur[0] < 2 || cur[1] < 2) fail("Conv2x2 needs a rank-3 input of at least 2x2");
        cur = {cur[0] - 1, cur[1] - 1, l.units};
        break;
      case LayerKind::MaxPool2:
        if (cur.size() != 3 || cur[0] < 2 || cur[1] < 2) fail("MaxPool2 needs a rank-3 input of at least 2x2");
        cur = {cur[0] / 2, cur[1] / 2, cur[2]};
        break;
      case LayerKind::Dense:
        if (cur.size() != 1) fail("Dense needs a rank-1 input");
        cur = {l.units};
        break;
      case LayerKind::Flatten:
        cur = {shape_size(cur)};
        break;
      case LayerKind::GlobalAvgPool:
        if (cur.size() != 3) fail("GlobalAvgPool needs a rank-3 input");
        cur = {cur[2]};
        break;
      case LayerKind::Dropout:
      case LayerKind::Relu:
      case LayerKind::Softmax:
        break;
    }
    out.push_back(cur);
  }
  return out;
}

ParamCount param_count(const NetworkSpec& spec) {
  const auto shapes = propagate_shapes(spec);
  ParamCount pc;
  Shape in = spec.input_shape;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const auto& l = spec.layers[i];
    std::size_t n = 0;
    if (l.kind == LayerKind::Dense) n = (in[0] + 1) * l.units;
    if (l.kind == LayerKind::Conv2x2) n = (2 * 2 * in[2] + 1) * l.units;
    pc.layers.push_back({l.name, l.kind, shapes[i], n});
    pc.total += n;
    in = shapes[i];
  }
  return pc;
}

template <typename Scalar>
std::size_t ParameterStore<Scalar>::total() const {
  std::size_t n = 0;
  for (const auto& t : tensors) n += t.value.size();
  return n;
}

template <typename Scalar>
ParameterStore<Scalar> ParameterStore<Scalar>::zeros_like() const {
  ParameterStore out;
  for (const auto& t : tensors) out.tensors.push_back({t.name, Tensor<Scalar>(t.value.shape())});
  return out;
}

namespace {

struct ParamSlot {
  std::string name;
  Shape shape;
  std::size_t fan_in = 0, fan_out = 0;
};

std::vector<ParamSlot> param_slots(const NetworkSpec& spec) {
  const auto shapes = propagate_shapes(spec);
  std::vector<ParamSlot> slots;
  Shape in = spec.input_shape;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const auto& l = spec.layers[i];
    if (l.kind == LayerKind::Conv2x2) {
      slots.push_back({l.name + "/kernel", {2, 2, in[2], l.units}, 4 * in[2], 4 * l.units});
      slots.push_back({l.name + "/bias", {l.units}, 0, 0});
    } else if (l.kind == LayerKind::Dense) {
      slots.push_back({l.name + "/kernel", {in[0], l.units}, in[0], l.units});
      slots.push_back({l.name + "/bias", {l.units}, 0, 0});
    }
    in = shapes[i];
  }
  return slots;
}

}  // namespace

template <typename Scalar>
ParameterStore<Scalar> init_params(const NetworkSpec& spec, Rng& rng) {
  ParameterStore<Scalar> ps;
  for (const auto& s : param_slots(spec)) {
    Tensor<Scalar> t(s.shape);
    if (s.fan_in > 0) {
      const double limit = std::sqrt(6.0 / static_cast<double>(s.fan_in + s.fan_out));
      for (auto& v : t.values()) v = static_cast<Scalar>(uniform(rng, -limit, limit));
    }
    ps.tensors.push_back({s.name, std::move(t)});
  }
  return ps;
}

template <typename Scalar>
ParameterStore<Scalar> zero_params(const NetworkSpec& spec) {
  ParameterStore<Scalar> ps;
  for (const auto& s : param_slots(spec)) ps.tensors.push_back({s.name, Tensor<Scalar>(s.shape)});
  return ps;
}

template <typename Scalar>
void validate_params(const NetworkSpec& spec, const ParameterStore<Scalar>& params) {
  const auto slots = param_slots(spec);
  if (slots.size() != params.tensors.size())
    throw ShapeError("parameter store has " + std::to_string(params.tensors.size()) + " tensors, network needs " +
                     std::to_string(slots.size()));
  for (std::size_t i = 0; i < slots.size(); ++i) {
    const auto& t = params.tensors[i];
    if (t.name != slots[i].name || t.value.shape() != slots[i].shape)
      throw ShapeError("parameter " + std::to_string(i) + " is " + t.name + to_string(t.value.shape()) +
                       ", network needs " + slots[i].name + to_string(slots[i].shape));
  }
}

template <typename Scalar>
Activations<Scalar> forward(const NetworkSpec& spec, const ParameterStore<Scalar>& params,
                            const Tensor<Scalar>& input, bool training, Rng& rng) {
  if (input.shape() != spec.input_shape)
    throw ShapeError("network input " + to_string(input.shape()) + " does not match " + to_string(spec.input_shape));
  Activations<Scalar> acts;
  const std::size_t n = spec.layers.size();
  acts.layer_count = n;
  acts.values.reserve(n + 1);
  acts.values.push_back(input);
  acts.pool_argmax.resize(n);
  acts.dropout_masks.resize(n);
  std::size_t p = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& l = spec.layers[i];
    const auto& x = acts.values.back();
    Tensor<Scalar> y;
    switch (l.kind) {
      case LayerKind::Conv2x2: {
        if (p + 2 > params.tensors.size()) throw ShapeError("parameter store too short for " + layer_label(spec, i));
        y = conv2d(x, ConvKernel<Scalar>{params.tensors[p].value, params.tensors[p + 1].value});
        p += 2;
        break;
      }
      case LayerKind::Dense:
        if (p + 2 > params.tensors.size()) throw ShapeError("parameter store too short for " + layer_label(spec, i));
        y = dense(x, params.tensors[p].value, params.tensors[p + 1].value);
        p += 2;
        break;
      case LayerKind::MaxPool2: {
        auto r = maxpool2(x);
        y = std::move(r.output);
        acts.pool_argmax[i] = std::move(r.argmax);
        break;
      }
      case LayerKind::Dropout: {
        auto r = dropout(x, l.rate, rng, training);
        y = std::move(r.output);
        acts.dropout_masks[i] = std::move(r.mask);
        break;
      }
      case LayerKind::Relu: y = relu(x); break;
      case LayerKind::Softmax: y = softmax(x); break;
      case LayerKind::Flatten: y = flatten(x); break;
      case LayerKind::GlobalAvgPool: y = global_avg_pool(x); break;
    }
    if (!all_finite(y)) throw NonFiniteError("non-finite activation at " + layer_label(spec, i));
    acts.values.push_back(std::move(y));
  }
  if (p != params.tensors.size()) throw ShapeError("parameter store has tensors the network does not use");
  return acts;
}

template <typename Scalar>
Tensor<Scalar> predict(const NetworkSpec& spec, const ParameterStore<Scalar>& params, const Tensor<Scalar>& input) {
  Rng unused(0);
  return forward(spec, params, input, false, unused).output();
}

template <typename Scalar>
ParameterStore<Scalar> backward(const NetworkSpec& spec, const ParameterStore<Scalar>& params,
                                const Activations<Scalar>& acts, const Tensor<Scalar>& loss_grad) {
  const std::size_t n = spec.layers.size();
  if (acts.layer_count != n || acts.values.size() != n + 1 || acts.values[0].shape() != spec.input_shape)
    throw ShapeError("activation cache does not belong to this network");
  if (loss_grad.shape() != acts.output().shape())
    throw ShapeError("loss gradient " + to_string(loss_grad.shape()) + " does not match network output");

  std::size_t p = 0;
  for (const auto& l : spec.layers) p += l.parametric() ? 2 : 0;
  if (p != params.tensors.size()) throw ShapeError("parameter store does not match the network");
  ParameterStore<Scalar> grads = params.zeros_like();
  Tensor<Scalar> g = loss_grad;
  for (std::size_t k = n; k-- > 0;) {
    const auto& l = spec.layers[k];
    const auto& x = acts.values[k];
    if (acts.values[k + 1].shape() != g.shape()) throw ShapeError("stale activation cache at " + layer_label(spec, k));
    switch (l.kind) {
      case LayerKind::Conv2x2: {
        p -= 2;
        auto cg = conv2d_backward(x, ConvKernel<Scalar>{params.tensors[p].value, params.tensors[p + 1].value}, g);
        grads.tensors[p].value = std::move(cg.weights);
        grads.tensors[p + 1].value = std::move(cg.bias);
        g = std::move(cg.input);
        break;
      }
      case LayerKind::Dense: {
        p -= 2;
        auto dg = dense_backward(x, params.tensors[p].value, g);
        grads.tensors[p].value = std::move(dg.weights);
        grads.tensors[p + 1].value = std::move(dg.bias);
        g = std::move(dg.input);
        break;
      }
      case LayerKind::MaxPool2: g = maxpool2_backward(x.shape(), acts.pool_argmax[k], g); break;
      case LayerKind::Dropout: g = dropout_backward(acts.dropout_masks[k], g); break;
      case LayerKind::Relu: g = relu_backward(x, g); break;
      case LayerKind::Softmax: g = softmax_backward(acts.values[k + 1], g); break;
      case LayerKind::Flatten: g = g.reshaped(x.shape()); break;
      case LayerKind::GlobalAvgPool: g = global_avg_pool_backward(x.shape(), g); break;
    }
  }
  return grads;
}

template <typename Scalar>
double cross_entropy(const Tensor<Scalar>& probs, std::size_t label) {
  if (label >= probs.size()) throw std::out_of_range("cross_entropy: label out of range");
  return -std::log(std::max(static_cast<double>(probs[label]), 1e-12));
}

template <typename Scalar>
Tensor<Scalar> cross_entropy_grad(const Tensor<Scalar>& probs, std::size_t label) {
  if (label >= probs.size()) throw std::out_of_range("cross_entropy_grad: label out of range");
  Tensor<Scalar> g(probs.shape());
  g[label] = static_cast<Scalar>(-1.0 / std::max(static_cast<double>(probs[label]), 1e-12));
  return g;
}

double learning_rate(const OptimizerConfig& config) {
  return std::visit([](const auto& c) { return c.lr; }, config);
}

void set_learning_rate(OptimizerConfig& config, double lr) {
  std::visit([lr](auto& c) { c.lr = lr; }, config);
}

void TrainingConfig::validate() const {
  if (batch_size == 0) throw std::invalid_argument("batch_size must be at least 1");
  if (!(learning_rate(optimizer) >= 0.0)) throw std::invalid_argument("learning rate must be non-negative");
  if (!(reduce_lr_factor > 0.0 && reduce_lr_factor <= 1.0))
    throw std::invalid_argument("reduce-LR factor must lie in (0, 1]");
}

namespace {

template <typename Scalar>
void check_grads(const ParameterStore<Scalar>& params, const ParameterStore<Scalar>& grads) {
  if (grads.tensors.size() != params.tensors.size()) throw ShapeError("gradient store is not congruent with params");
  for (std::size_t i = 0; i < grads.tensors.size(); ++i) {
    if (grads.tensors[i].value.shape() != params.tensors[i].value.shape())
      throw ShapeError("gradient for " + params.tensors[i].name + " has the wrong shape");
    if (!all_finite(grads.tensors[i].value))
      throw NonFiniteError("non-finite gradient in " + params.tensors[i].name + "; step aborted");
  }
}

template <typename Scalar>
void ensure_state(OptimizerState<Scalar>& state, const ParameterStore<Scalar>& params) {
  if (state.first.tensors.size() != params.tensors.size()) {
    state.first = params.zeros_like();
    state.second = params.zeros_like();
    state.steps = 0;
  }
}

}  // namespace

template <typename Scalar>
void sgd_step(ParameterStore<Scalar>& params, const ParameterStore<Scalar>& grads, const SgdConfig& config,
              OptimizerState<Scalar>& state) {
  check_grads(params, grads);
  ensure_state(state, params);
  const auto lr = static_cast<Scalar>(config.lr);
  const auto mu = static_cast<Scalar>(config.momentum);
  for (std::size_t i = 0; i < params.tensors.size(); ++i) {
    auto v = state.first.tensors[i].value.vector();
    v = mu * v - lr * grads.tensors[i].value.vector();
    params.tensors[i].value.vector() += v;
  }
  ++state.steps;
}

template <typename Scalar>
void adam_step(ParameterStore<Scalar>& params, const ParameterStore<Scalar>& grads, const AdamConfig& config,
               std::size_t step_index, OptimizerState<Scalar>& state) {
  if (step_index == 0) throw std::invalid_argument("adam_step: step index is 1-based");
  check_grads(params, grads);
  ensure_state(state, params);
  const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(step_index));
  const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(step_index));
  const auto b1 = static_cast<Scalar>(config.beta1), b2 = static_cast<Scalar>(config.beta2);
  const auto step = static_cast<Scalar>(config.lr / c1);
  const auto inv_c2 = static_cast<Scalar>(1.0 / c2);
  const auto eps = static_cast<Scalar>(config.eps);
  for (std::size_t i = 0; i < params.tensors.size(); ++i) {
    const auto g = grads.tensors[i].value.vector().array();
    auto m = state.first.tensors[i].value.vector().array();
    auto v = state.second.tensors[i].value.vector().array();
    m = b1 * m + (Scalar(1) - b1) * g;
    v = b2 * v + (Scalar(1) - b2) * g.square();
    params.tensors[i].value.vector().array() -= step * m / ((v * inv_c2).sqrt() + eps);
  }
  state.steps = step_index;
}

template <typename Scalar>
void optimizer_step(ParameterStore<Scalar>& params, const ParameterStore<Scalar>& grads,
                    const OptimizerConfig& config, OptimizerState<Scalar>& state) {
  if (const auto* sgd = std::get_if<SgdConfig>(&config)) {
    sgd_step(params, grads, *sgd, state);
  } else {
    adam_step(params, grads, std::get<AdamConfig>(config), state.steps + 1, state);
  }
}

template <typename Scalar>
void accumulate(ParameterStore<Scalar>& grads, const ParameterStore<Scalar>& other, Scalar scale) {
  if (grads.tensors.size() != other.tensors.size()) throw ShapeError("accumulate: stores are not congruent");
  for (std::size_t i = 0; i < grads.tensors.size(); ++i)
    grads.tensors[i].value.vector() += scale * other.tensors[i].value.vector();
}

#define BLPNET_INSTANTIATE_NN(S)                                                                                  \
  template struct ParameterStore<S>;                                                                              \
  template ParameterStore<S> init_params(const NetworkSpec&, Rng&);                                               \
  template ParameterStore<S> zero_params(const NetworkSpec&);                                                     \
  template void validate_params(const NetworkSpec&, const ParameterStore<S>&);                                    \
  template Activations<S> forward(const NetworkSpec&, const ParameterStore<S>&, const Tensor<S>&, bool, Rng&);    \
  template Tensor<S> predict(const NetworkSpec&, const ParameterStore<S>&, const Tensor<S>&);                     \
  template ParameterStore<S> backward(const NetworkSpec&, const ParameterStore<S>&, const Activations<S>&,        \
                                      const Tensor<S>&);                                                          \
  template double cross_entropy(const Tensor<S>&, std::size_t);                                                   \
  template Tensor<S> cross_entropy_grad(const Tensor<S>&, std::size_t);                                           \
  template void sgd_step(ParameterStore<S>&, const ParameterStore<S>&, const SgdConfig&, OptimizerState<S>&);     \
  template void adam_step(ParameterStore<S>&, const ParameterStore<S>&, const AdamConfig&, std::size_t,           \
                          OptimizerState<S>&);                                                                    \
  template void optimizer_step(ParameterStore<S>&, const ParameterStore<S>&, const OptimizerConfig&,              \
                               OptimizerState<S>&);                                                               \
  template void accumulate(ParameterStore<S>&, const ParameterStore<S>&, S);

BLPNET_INSTANTIATE_NN(float)
BLPNET_INSTANTIATE_NN(double)

#undef BLPNET_INSTANTIATE_NN

}  // namespace blpnet
