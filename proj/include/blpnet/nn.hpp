#pragma once

#include <cstddef>
#include <string>
#include <variant>
#include <vector>

#include "blpnet/tensor.hpp"

namespace blpnet {

enum class LayerKind { Conv2x2, MaxPool2, Dropout, Dense, Relu, Softmax, Flatten, GlobalAvgPool };

const char* layer_kind_name(LayerKind kind);

struct LayerSpec {
  LayerKind kind = LayerKind::Relu;
  std::size_t units = 0;  // out_channels for Conv2x2, out_units for Dense
  double rate = 0.0;      // Dropout only
  std::string name;

  static LayerSpec conv2x2(std::size_t out_channels, std::string name = {});
  static LayerSpec dense(std::size_t out_units, std::string name = {});
  static LayerSpec dropout(double rate, std::string name = {});
  static LayerSpec maxpool2(std::string name = {});
  static LayerSpec relu(std::string name = {});
  static LayerSpec softmax(std::string name = {});
  static LayerSpec flatten(std::string name = {});
  static LayerSpec global_avg_pool(std::string name = {});

  bool parametric() const { return kind == LayerKind::Conv2x2 || kind == LayerKind::Dense; }
};

struct NetworkSpec {
  Shape input_shape;
  std::vector<LayerSpec> layers;

  // Unnamed layers get "<kind>_<n>" names counted per kind; validates
  // layer arguments. Throws std::invalid_argument.
  NetworkSpec() = default;
  NetworkSpec(Shape input, std::vector<LayerSpec> layer_list);

  bool softmax_output() const { return !layers.empty() && layers.back().kind == LayerKind::Softmax; }
};

// Output shape after every layer; element i is the output of layers[i].
// Throws ShapeError naming the failing layer.
std::vector<Shape> propagate_shapes(const NetworkSpec& spec);

struct LayerCount {
  std::string name;
  LayerKind kind;
  Shape output_shape;
  std::size_t params = 0;
};

struct ParamCount {
  std::vector<LayerCount> layers;
  std::size_t total = 0;
};

// Dense: (in + 1) * out. Conv: (kh * kw * in_ch + 1) * out_ch. Everything else: 0.
ParamCount param_count(const NetworkSpec& spec);

template <typename Scalar>
struct NamedTensor {
  std::string name;
  Tensor<Scalar> value;
  bool operator==(const NamedTensor&) const = default;
};

/// Flat list of learned tensors, weights then bias for each parametric
/// layer in network order. Tensor names are "<layer>/kernel" and "<layer>/bias".
template <typename Scalar>
struct ParameterStore {
  std::vector<NamedTensor<Scalar>> tensors;

  std::size_t total() const;
  ParameterStore zeros_like() const;
  bool operator==(const ParameterStore&) const = default;

  template <typename Other>
  ParameterStore<Other> cast() const {
    ParameterStore<Other> out;
    for (const auto& t : tensors) out.tensors.push_back({t.name, t.value.template cast<Other>()});
    return out;
  }
};

// Uniform Glorot (fan average) kernels, zero biases.
template <typename Scalar>
ParameterStore<Scalar> init_params(const NetworkSpec& spec, Rng& rng);

template <typename Scalar>
ParameterStore<Scalar> zero_params(const NetworkSpec& spec);

// Throws ShapeError when names, order or shapes disagree with the spec.
template <typename Scalar>
void validate_params(const NetworkSpec& spec, const ParameterStore<Scalar>& params);

/// Everything forward() produces that backward() needs.
template <typename Scalar>
struct Activations {
  // values[0] is the input; values[i + 1] is the output of layer i.
  std::vector<Tensor<Scalar>> values;
  std::vector<std::vector<std::uint32_t>> pool_argmax;
  std::vector<Tensor<Scalar>> dropout_masks;
  std::size_t layer_count = 0;

  const Tensor<Scalar>& output() const { return values.back(); }
};

template <typename Scalar>
Activations<Scalar> forward(const NetworkSpec& spec, const ParameterStore<Scalar>& params,
                            const Tensor<Scalar>& input, bool training, Rng& rng);

// Inference-mode forward that returns only the output.
template <typename Scalar>
Tensor<Scalar> predict(const NetworkSpec& spec, const ParameterStore<Scalar>& params, const Tensor<Scalar>& input);

// loss_grad is dLoss/d(output). Gradients are returned congruent to params.
template <typename Scalar>
ParameterStore<Scalar> backward(const NetworkSpec& spec, const ParameterStore<Scalar>& params,
                                const Activations<Scalar>& acts, const Tensor<Scalar>& loss_grad);

// Categorical cross-entropy on a probability vector.
template <typename Scalar>
double cross_entropy(const Tensor<Scalar>& probs, std::size_t label);

template <typename Scalar>
Tensor<Scalar> cross_entropy_grad(const Tensor<Scalar>& probs, std::size_t label);

struct SgdConfig {
  double lr = 0.01;
  double momentum = 0.9;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

using OptimizerConfig = std::variant<SgdConfig, AdamConfig>;

double learning_rate(const OptimizerConfig& config);
void set_learning_rate(OptimizerConfig& config, double lr);

struct TrainingConfig {
  OptimizerConfig optimizer = AdamConfig{};
  std::size_t batch_size = 64;
  std::size_t epochs = 50;
  Shape input_shape{64, 64, 1};
  std::size_t early_stop_patience = 5;
  double reduce_lr_factor = 0.5;
  std::size_t reduce_lr_patience = 2;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Momentum / moment buffers, congruent to the parameter store.
template <typename Scalar>
struct OptimizerState {
  ParameterStore<Scalar> first;
  ParameterStore<Scalar> second;
  std::size_t steps = 0;
};

// Both steps check every gradient for finiteness before touching params and
// throw NonFiniteError naming the offending tensor.
template <typename Scalar>
void sgd_step(ParameterStore<Scalar>& params, const ParameterStore<Scalar>& grads, const SgdConfig& config,
              OptimizerState<Scalar>& state);

// step_index is 1-based and drives bias correction.
template <typename Scalar>
void adam_step(ParameterStore<Scalar>& params, const ParameterStore<Scalar>& grads, const AdamConfig& config,
               std::size_t step_index, OptimizerState<Scalar>& state);

template <typename Scalar>
void optimizer_step(ParameterStore<Scalar>& params, const ParameterStore<Scalar>& grads,
                    const OptimizerConfig& config, OptimizerState<Scalar>& state);

// grads += other * scale, tensor by tensor.
template <typename Scalar>
void accumulate(ParameterStore<Scalar>& grads, const ParameterStore<Scalar>& other, Scalar scale = Scalar(1));

}  // namespace blpnet
