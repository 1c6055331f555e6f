#include "blpnet/training.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace blpnet {

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out;
  for (const auto i : indices) {
    out.images.push_back(images.at(i));
    out.labels.push_back(labels.at(i));
  }
  return out;
}

LabelEncoder::LabelEncoder(std::span<const std::string> labels) {
  for (const auto& l : labels) index_.emplace(l, 0);
  for (auto& [label, index] : index_) {
    index = labels_.size();
    labels_.push_back(label);
  }
}

std::size_t LabelEncoder::encode(const std::string& label) const {
  const auto it = index_.find(label);
  if (it == index_.end()) throw std::out_of_range("unknown label '" + label + "'");
  return it->second;
}

DatasetSplit split(std::span<const std::string> labels, std::span<const double> ratios, std::uint64_t seed) {
  if (labels.empty()) throw std::invalid_argument("split: empty corpus");
  if (ratios.empty() || ratios.size() > 3) throw std::invalid_argument("split: expected one to three ratios");
  double total = 0.0;
  for (const double r : ratios) {
    if (!(r >= 0.0)) throw std::invalid_argument("split: ratios must be nonnegative");
    total += r;
  }
  if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("split: ratios must sum to 1");

  const std::size_t n = labels.size();
  std::vector<std::size_t> counts(ratios.size());
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < ratios.size(); ++i) {
    const double exact = ratios[i] * static_cast<double>(n);
    counts[i] = static_cast<std::size_t>(std::floor(exact + 1e-9));
    assigned += counts[i];
    remainders.emplace_back(exact - static_cast<double>(counts[i]), i);
  }
  std::stable_sort(remainders.begin(), remainders.end(), [](auto a, auto b) { return a.first > b.first; });
  for (std::size_t k = 0; assigned < n; ++k, ++assigned) ++counts[remainders[k % remainders.size()].second];

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  shuffle(order, rng);

  DatasetSplit out;
  std::vector<std::size_t>* parts[3] = {&out.train, &out.validation, &out.test};
  std::size_t pos = 0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    parts[i]->assign(order.begin() + static_cast<std::ptrdiff_t>(pos),
                     order.begin() + static_cast<std::ptrdiff_t>(pos + counts[i]));
    pos += counts[i];
  }
  out.encoder = LabelEncoder(labels);
  return out;
}

LabelledCorpus load_corpus(const std::filesystem::path& root, int target_size) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(root)) throw std::runtime_error("corpus directory not found: " + root.string());
  std::vector<fs::path> dirs;
  for (const auto& e : fs::directory_iterator(root))
    if (e.is_directory()) dirs.push_back(e.path());
  std::sort(dirs.begin(), dirs.end());
  LabelledCorpus corpus;
  for (const auto& dir : dirs) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir)) {
      const auto ext = e.path().extension();
      if (e.is_regular_file() && (ext == ".pgm" || ext == ".pnm" || ext == ".ppm" || ext == ".png")) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      auto img = read_image(f);
      if (img.rows() != target_size || img.cols() != target_size) img = resize_bilinear(img, target_size, target_size);
      corpus.images.push_back(std::move(img));
      corpus.labels.push_back(dir.filename().string());
    }
  }
  if (corpus.images.empty()) throw std::runtime_error("corpus " + root.string() + " holds no images");
  return corpus;
}

namespace {

/// Loss and gradient of one network output for one sample.
using LossFn = std::function<double(const Tensor<float>& out, std::size_t index, Tensor<float>* grad)>;

struct Problem {
  std::size_t train_size = 0;
  std::size_t val_size = 0;
  std::function<Tensor<float>(std::size_t index, Rng& rng)> train_input;
  std::function<Tensor<float>(std::size_t index)> val_input;
  LossFn train_loss;
  LossFn val_loss;
  std::function<bool(const Tensor<float>& out, std::size_t index)> val_correct;
};

struct Evaluation {
  double loss = 0.0;
  double accuracy = 0.0;
};

Evaluation evaluate(const NetworkSpec& spec, const ParameterStore<float>& params, const Problem& p) {
  Evaluation e;
  if (p.val_size == 0) return e;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < p.val_size; ++i) {
    const auto out = predict(spec, params, p.val_input(i));
    e.loss += p.val_loss(out, i, nullptr);
    if (p.val_correct && p.val_correct(out, i)) ++hits;
  }
  e.loss /= static_cast<double>(p.val_size);
  e.accuracy = static_cast<double>(hits) / static_cast<double>(p.val_size);
  return e;
}

double train_set_loss(const NetworkSpec& spec, const ParameterStore<float>& params, const Problem& p) {
  double loss = 0.0;
  for (std::size_t i = 0; i < p.train_size; ++i) {
    Rng rng(0);
    loss += p.train_loss(predict(spec, params, p.train_input(i, rng)), i, nullptr);
  }
  return loss / static_cast<double>(p.train_size);
}

TrainResult fit(const NetworkSpec& spec, const Problem& problem, TrainingConfig config,
                const ParameterStore<float>* initial) {
  config.validate();
  if (problem.train_size == 0) throw std::invalid_argument("train: empty training set");
  TrainResult result;
  ParameterStore<float> params;
  if (initial) {
    validate_params(spec, *initial);
    params = *initial;
  } else {
    Rng init_rng(mix_seed(config.seed, 0x1417));
    params = init_params<float>(spec, init_rng);
  }
  OptimizerState<float> state;
  const bool monitor_val = problem.val_size > 0;

  auto monitored = [&](const EpochRecord& r) { return monitor_val ? r.val_loss : r.train_loss; };

  EpochRecord base;
  base.lr = learning_rate(config.optimizer);
  const auto e0 = evaluate(spec, params, problem);
  base.val_loss = e0.loss;
  base.val_accuracy = e0.accuracy;
  base.train_loss = train_set_loss(spec, params, problem);
  result.history.push_back(base);
  result.params = params;
  result.best_val_loss = monitored(base);

  std::size_t stale = 0;
  std::vector<std::size_t> order(problem.train_size);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    Rng order_rng(mix_seed(config.seed, epoch, std::numeric_limits<std::uint64_t>::max()));
    shuffle(order, order_rng);
    double loss_sum = 0.0;
    bool diverged = false;
    for (std::size_t start = 0; start < order.size() && !diverged; start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      auto grads = params.zeros_like();
      const float scale = 1.0f / static_cast<float>(end - start);
      try {
        for (std::size_t k = start; k < end; ++k) {
          const std::size_t i = order[k];
          Rng rng(mix_seed(config.seed, epoch, i));
          const auto acts = forward(spec, params, problem.train_input(i, rng), true, rng);
          Tensor<float> g;
          const double loss = problem.train_loss(acts.output(), i, &g);
          if (!std::isfinite(loss)) throw NonFiniteError("non-finite training loss");
          loss_sum += loss;
          accumulate(grads, backward(spec, params, acts, g), scale);
        }
        optimizer_step(params, grads, config.optimizer, state);
      } catch (const NonFiniteError&) {
        diverged = true;
      }
    }
    if (diverged) {
      result.diverged = true;
      break;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = learning_rate(config.optimizer);
    rec.train_loss = loss_sum / static_cast<double>(order.size());
    const auto ev = evaluate(spec, params, problem);
    rec.val_loss = ev.loss;
    rec.val_accuracy = ev.accuracy;
    result.history.push_back(rec);

    if (!std::isfinite(monitored(rec))) {
      result.diverged = true;
      break;
    }
    if (monitored(rec) < result.best_val_loss) {
      result.best_val_loss = monitored(rec);
      result.best_epoch = epoch;
      result.params = params;
      stale = 0;
    } else {
      ++stale;
      if (stale > config.early_stop_patience) {
        result.early_stopped = true;
        break;
      }
      if (config.reduce_lr_patience > 0 && stale % config.reduce_lr_patience == 0)
        set_learning_rate(config.optimizer, learning_rate(config.optimizer) * config.reduce_lr_factor);
    }
  }
  return result;
}

std::size_t argmax(const Tensor<float>& t) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < t.size(); ++i)
    if (t[i] > t[best]) best = i;
  return best;
}

LossFn cross_entropy_loss(std::function<std::size_t(std::size_t)> label_of) {
  return [label_of](const Tensor<float>& out, std::size_t i, Tensor<float>* grad) {
    const auto label = label_of(i);
    if (grad) *grad = cross_entropy_grad(out, label);
    return cross_entropy(out, label);
  };
}

}  // namespace

TrainResult train(const NetworkSpec& spec, const Dataset& train_set, const Dataset& validation,
                  const TrainingConfig& config, const AugmentConfig& augmentation,
                  const ParameterStore<float>* initial) {
  augmentation.validate();
  if (train_set.images.size() != train_set.labels.size() || validation.images.size() != validation.labels.size())
    throw std::invalid_argument("train: image and label counts differ");
  Problem p;
  p.train_size = train_set.size();
  p.val_size = validation.size();
  p.train_input = [&](std::size_t i, Rng& rng) { return to_tensor(augment(train_set.images[i], augmentation, rng)); };
  p.val_input = [&](std::size_t i) { return to_tensor(validation.images[i]); };
  p.train_loss = cross_entropy_loss([&](std::size_t i) { return train_set.labels[i]; });
  p.val_loss = cross_entropy_loss([&](std::size_t i) { return validation.labels[i]; });
  p.val_correct = [&](const Tensor<float>& out, std::size_t i) { return argmax(out) == validation.labels[i]; };
  return fit(spec, p, config, initial);
}

void write_history_csv(std::span<const EpochRecord> history, std::ostream& out) {
  out << "epoch,lr,train_loss,val_loss,val_acc\n";
  for (const auto& r : history)
    out << r.epoch << ',' << r.lr << ',' << r.train_loss << ',' << r.val_loss << ',' << r.val_accuracy << '\n';
}

double accuracy(const NetworkSpec& spec, const ParameterStore<float>& params, const Dataset& data) {
  if (data.size() == 0) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < data.size(); ++i)
    if (argmax(predict(spec, params, to_tensor(data.images[i]))) == data.labels[i]) ++hits;
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

HeadTrainResult train_detector_head(const DetectorHead& head, std::span<const HeadSample> train_set,
                                    std::span<const HeadSample> validation, const TrainingConfig& config) {
  if (train_set.empty()) throw std::invalid_argument("train_detector_head: empty training set");
  for (const auto& s : train_set)
    if (s.features.shape() != Shape{head.feature_dim})
      throw ShapeError("head sample features " + to_string(s.features.shape()) + " do not match feature_dim " +
                       std::to_string(head.feature_dim));

  auto label = [](const HeadSample& s) -> std::size_t { return s.object ? 0 : 1; };
  Problem cls;
  cls.train_size = train_set.size();
  cls.val_size = validation.size();
  cls.train_input = [&](std::size_t i, Rng&) { return train_set[i].features; };
  cls.val_input = [&](std::size_t i) { return validation[i].features; };
  cls.train_loss = cross_entropy_loss([&](std::size_t i) { return label(train_set[i]); });
  cls.val_loss = cross_entropy_loss([&](std::size_t i) { return label(validation[i]); });
  cls.val_correct = [&](const Tensor<float>& out, std::size_t i) { return argmax(out) == label(validation[i]); };

  std::vector<const HeadSample*> pos_train, pos_val;
  for (const auto& s : train_set)
    if (s.object) pos_train.push_back(&s);
  for (const auto& s : validation)
    if (s.object) pos_val.push_back(&s);

  auto box_loss = [](const std::vector<const HeadSample*>& set) {
    return [&set](const Tensor<float>& out, std::size_t i, Tensor<float>* grad) {
      const auto& b = set[i]->box;
      const double t[4] = {b.x_min, b.y_min, b.x_max, b.y_max};
      double loss = 0.0;
      if (grad) *grad = Tensor<float>({4});
      for (std::size_t k = 0; k < 4; ++k) {
        const double d = out[k] - t[k];
        loss += 0.25 * d * d;
        if (grad) (*grad)[k] = static_cast<float>(0.5 * d);
      }
      return loss;
    };
  };
  Problem box;
  box.train_size = pos_train.size();
  box.val_size = pos_val.size();
  box.train_input = [&](std::size_t i, Rng&) { return pos_train[i]->features; };
  box.val_input = [&](std::size_t i) { return pos_val[i]->features; };
  box.train_loss = box_loss(pos_train);
  box.val_loss = box_loss(pos_val);

  HeadTrainResult out;
  TrainingConfig c = config;
  c.input_shape = {head.feature_dim};
  auto rc = fit(head.class_branch, cls, c, nullptr);
  out.params.class_params = std::move(rc.params);
  out.class_history = std::move(rc.history);
  out.val_class_accuracy = out.class_history.empty() ? 0.0 : evaluate(head.class_branch, out.params.class_params, cls).accuracy;
  if (box.train_size > 0) {
    c.seed = mix_seed(config.seed, 0xB0C5);
    auto rb = fit(head.bbox_branch, box, c, nullptr);
    out.params.bbox_params = std::move(rb.params);
    out.bbox_history = std::move(rb.history);
    if (box.val_size > 0) out.val_bbox_mse = evaluate(head.bbox_branch, out.params.bbox_params, box).loss;
  } else {
    Rng rng(mix_seed(config.seed, 0xB0C5));
    out.params.bbox_params = init_params<float>(head.bbox_branch, rng);
  }
  return out;
}

namespace {

struct Pattern {
  std::vector<std::vector<bool>> relu_signs;
  std::vector<std::vector<std::uint32_t>> argmax;
  bool operator==(const Pattern&) const = default;
};

Pattern pattern_of(const NetworkSpec& spec, const Activations<double>& acts) {
  Pattern p;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    if (spec.layers[i].kind == LayerKind::Relu) {
      std::vector<bool> s;
      for (const double v : acts.values[i].values()) s.push_back(v > 0.0);
      p.relu_signs.push_back(std::move(s));
    } else if (spec.layers[i].kind == LayerKind::MaxPool2) {
      p.argmax.push_back(acts.pool_argmax[i]);
    }
  }
  return p;
}

}  // namespace

GradientCheckReport gradient_check(const NetworkSpec& spec, const ParameterStore<double>& params,
                                   const Tensor<double>& input, std::size_t label, const Tensor<double>* target,
                                   const GradientCheckConfig& config) {
  validate_params(spec, params);
  const bool classify = spec.softmax_output();
  auto loss_and_grad = [&](const Activations<double>& acts, Tensor<double>* grad) {
    const auto& out = acts.output();
    if (classify) {
      if (grad) *grad = cross_entropy_grad(out, label);
      return cross_entropy(out, label);
    }
    if (!target || target->shape() != out.shape()) throw ShapeError("gradient_check: regression target shape mismatch");
    double loss = 0.0;
    if (grad) *grad = Tensor<double>(out.shape());
    for (std::size_t k = 0; k < out.size(); ++k) {
      const double d = out[k] - (*target)[k];
      loss += 0.5 * d * d;
      if (grad) (*grad)[k] = d;
    }
    return loss;
  };

  Rng unused(0);
  const auto base = forward(spec, params, input, false, unused);
  const auto base_pattern = pattern_of(spec, base);
  Tensor<double> g;
  loss_and_grad(base, &g);
  const auto analytic = backward(spec, params, base, g);

  std::vector<std::pair<std::size_t, std::size_t>> coords;
  for (std::size_t t = 0; t < params.tensors.size(); ++t)
    for (std::size_t k = 0; k < params.tensors[t].value.size(); ++k) coords.emplace_back(t, k);

  GradientCheckReport report;
  Rng rng(config.seed);
  const std::size_t wanted = std::min(config.coordinates, coords.size());
  const std::size_t max_draws = 20 * wanted + 100;
  auto probe = params;
  for (std::size_t draw = 0; report.coordinates < wanted && draw < max_draws; ++draw) {
    const auto [t, k] = coords[uniform_index(rng, coords.size())];
    double& w = probe.tensors[t].value[k];
    const double w0 = w;
    w = w0 + config.step;
    const auto plus = forward(spec, probe, input, false, unused);
    w = w0 - config.step;
    const auto minus = forward(spec, probe, input, false, unused);
    w = w0;
    if (!(pattern_of(spec, plus) == base_pattern) || !(pattern_of(spec, minus) == base_pattern)) {
      ++report.resampled;
      continue;
    }
    const double numeric = (loss_and_grad(plus, nullptr) - loss_and_grad(minus, nullptr)) / (2.0 * config.step);
    const double a = analytic.tensors[t].value[k];
    if (!std::isfinite(numeric) || !std::isfinite(a)) report.finite = false;
    const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
    report.max_relative_error = std::max(report.max_relative_error, std::abs(a - numeric) / denom);
    ++report.coordinates;
  }
  return report;
}

}  // namespace blpnet
