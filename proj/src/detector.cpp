#include "blpnet/detector.hpp"

#include <algorithm>
#include <cmath>

#include "blpnet/weights_io.hpp"

namespace blpnet {

BBox BBox::within(const BBox& outer) const {
  const double w = outer.x_max - outer.x_min, h = outer.y_max - outer.y_min;
  return {outer.x_min + x_min * w, outer.y_min + y_min * h, outer.x_min + x_max * w, outer.y_min + y_max * h};
}

ToyBackbone::ToyBackbone() : response_(ConvKernel<float>::zeros(1, 1, 1, 2)) {
  // channel 0: darkness, zero above 0.4; channel 1: brightness, zero below 0.8
  response_.weights[0] = -2.5f;
  response_.bias[0] = 1.0f;
  response_.weights[1] = 4.0f;
  response_.bias[1] = -3.2f;
}

Tensor<float> ToyBackbone::extract(const GrayImage& image) const {
  if (image.size() == 0) throw std::invalid_argument("ToyBackbone: empty image");
  const auto pooled = maxpool2(relu(conv2d(to_tensor(resize_bilinear(image, kInputSize, kInputSize)), response_)));
  const auto& r = pooled.output;
  const std::size_t n = kInputSize / 2;
  float mass[2] = {0.0f, 0.0f};
  for (std::size_t i = 0; i < n * n; ++i)
    for (std::size_t k = 0; k < 2; ++k) mass[k] += r[i * 2 + k];
  float scale[2];
  for (std::size_t k = 0; k < 2; ++k) scale[k] = 1.0f / std::max(mass[k] / static_cast<float>(n * n), 0.01f);
  Tensor<float> out({n, n, kChannels});
  for (std::size_t y = 0; y < n; ++y)
    for (std::size_t x = 0; x < n; ++x) {
      const float u = (static_cast<float>(x) + 0.5f) / (n / 2.0f) - 1.0f;
      const float v = (static_cast<float>(y) + 0.5f) / (n / 2.0f) - 1.0f;
      const float mono[6] = {1.0f, u, v, u * u, v * v, u * v};
      for (std::size_t k = 0; k < 2; ++k)
        for (std::size_t m = 0; m < 6; ++m) out.at(y, x, k * 6 + m) = r.at(y, x, k) * mono[m] * (m ? scale[k] : 1.0f);
    }
  return out;
}

FileFeatureProvider::FileFeatureProvider(const std::filesystem::path& path) : features_(load_features(path)) {}

Tensor<float> FileFeatureProvider::extract(const GrayImage&) const { return features_; }

namespace {

NetworkSpec branch(std::size_t feature_dim, double rate, const std::string& prefix, std::size_t outputs,
                   bool softmax_out) {
  std::vector<LayerSpec> layers;
  const std::size_t widths[] = {256, 128, 64};
  std::size_t k = 0;
  for (auto w : widths) {
    layers.push_back(LayerSpec::dense(w, prefix + "_dense_" + std::to_string(k)));
    layers.push_back(LayerSpec::relu(prefix + "_relu_" + std::to_string(k)));
    layers.push_back(LayerSpec::dropout(rate, prefix + "_dropout_" + std::to_string(k)));
    ++k;
  }
  layers.push_back(LayerSpec::dense(32, prefix + "_dense_3"));
  layers.push_back(LayerSpec::relu(prefix + "_relu_3"));
  layers.push_back(LayerSpec::dense(outputs, prefix + "_dense_4"));
  if (softmax_out) layers.push_back(LayerSpec::softmax(prefix + "_softmax"));
  return NetworkSpec({feature_dim}, std::move(layers));
}

constexpr std::size_t kBranchTensors = 10;

}  // namespace

DetectorHead build_detector_head(std::size_t feature_dim, double dropout_rate) {
  if (feature_dim == 0) throw std::invalid_argument("detector head feature_dim must be at least 1");
  return {feature_dim, branch(feature_dim, dropout_rate, "class", 2, true),
          branch(feature_dim, dropout_rate, "bbox", 4, false)};
}

HeadParams init_head_params(const DetectorHead& head, Rng& rng) {
  HeadParams p;
  p.class_params = init_params<float>(head.class_branch, rng);
  p.bbox_params = init_params<float>(head.bbox_branch, rng);
  return p;
}

ParameterStore<float> join_head_params(const HeadParams& params) {
  ParameterStore<float> joined = params.class_params;
  for (const auto& t : params.bbox_params.tensors) joined.tensors.push_back(t);
  return joined;
}

HeadParams split_head_params(const DetectorHead& head, const ParameterStore<float>& joined) {
  if (joined.tensors.size() != 2 * kBranchTensors)
    throw ShapeError("detector head file holds " + std::to_string(joined.tensors.size()) + " tensors, expected 20");
  HeadParams p;
  p.class_params.tensors.assign(joined.tensors.begin(), joined.tensors.begin() + kBranchTensors);
  p.bbox_params.tensors.assign(joined.tensors.begin() + kBranchTensors, joined.tensors.end());
  validate_params(head.class_branch, p.class_params);
  validate_params(head.bbox_branch, p.bbox_params);
  return p;
}

std::pair<DetectorHead, HeadParams> load_head(const std::filesystem::path& path) {
  const auto joined = load_weights(path);
  if (joined.tensors.empty() || joined.tensors[0].value.rank() != 2)
    throw ShapeError(path.string() + " is not a detector head file");
  auto head = build_detector_head(joined.tensors[0].value.dim(0));
  auto params = split_head_params(head, joined);
  return {std::move(head), std::move(params)};
}

Tensor<float> pooled_features(const Tensor<float>& features) {
  if (features.rank() == 3) return global_avg_pool(features);
  if (features.rank() == 1) return features;
  throw ShapeError("backbone features must be rank 1 or 3, got " + to_string(features.shape()));
}

HeadOutput run_head(const DetectorHead& head, const HeadParams& params, const Tensor<float>& features) {
  const auto pooled = pooled_features(features);
  const auto cls = predict(head.class_branch, params.class_params, pooled);
  const auto box = predict(head.bbox_branch, params.bbox_params, pooled);
  HeadOutput out;
  for (std::size_t i = 0; i < 2; ++i) out.class_probs[i] = cls[i];
  for (std::size_t i = 0; i < 4; ++i) out.bbox[i] = box[i];
  return out;
}

std::optional<Detection> detect(const GrayImage& image, const FeatureProvider& provider, const DetectorHead& head,
                                const HeadParams& params, double score_threshold, Stage stage) {
  if (image.size() == 0) throw std::invalid_argument("detect: empty image");
  if (!(score_threshold >= 0.0 && score_threshold <= 1.0))
    throw std::invalid_argument("detect: threshold must lie in [0, 1]");
  const auto features = provider.extract(image);
  if (features.shape() != provider.output_shape())
    throw ShapeError("feature provider returned " + to_string(features.shape()) + ", declared " +
                     to_string(provider.output_shape()));
  const auto out = run_head(head, params, features);
  if (out.class_probs[0] < score_threshold) return std::nullopt;
  auto c = [](double v) { return std::clamp(v, 0.0, 1.0); };
  Detection d;
  d.bbox = {c(std::min(out.bbox[0], out.bbox[2])), c(std::min(out.bbox[1], out.bbox[3])),
            c(std::max(out.bbox[0], out.bbox[2])), c(std::max(out.bbox[1], out.bbox[3]))};
  d.class_probs = out.class_probs;
  d.stage = stage;
  return d;
}

PixelRect bbox_to_pixels(const BBox& bbox, int width, int height) {
  if (!bbox.valid()) throw std::invalid_argument("bbox outside [0, 1] or inverted");
  PixelRect r{static_cast<int>(std::lround(bbox.x_min * width)), static_cast<int>(std::lround(bbox.y_min * height)),
              static_cast<int>(std::lround(bbox.x_max * width)), static_cast<int>(std::lround(bbox.y_max * height))};
  if (r.width() <= 0 || r.height() <= 0) throw DegenerateCropError("bbox rounds to an empty pixel rectangle");
  return r;
}

GrayImage crop(const GrayImage& image, const BBox& bbox) {
  return crop(image, bbox_to_pixels(bbox, static_cast<int>(image.cols()), static_cast<int>(image.rows())));
}

double bbox_mse(const BBox& a, const BBox& b) {
  const double d[4] = {a.x_min - b.x_min, a.y_min - b.y_min, a.x_max - b.x_max, a.y_max - b.y_max};
  return (d[0] * d[0] + d[1] * d[1] + d[2] * d[2] + d[3] * d[3]) / 4.0;
}

}  // namespace blpnet
