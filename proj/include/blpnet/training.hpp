#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "blpnet/augment.hpp"
#include "blpnet/detector.hpp"
#include "blpnet/nn.hpp"

namespace blpnet {

struct Dataset {
  std::vector<GrayImage> images;
  std::vector<std::size_t> labels;

  std::size_t size() const { return images.size(); }
  Dataset subset(std::span<const std::size_t> indices) const;
};

/// Bijective label <-> class index map, indices in sorted label order.
class LabelEncoder {
 public:
  LabelEncoder() = default;
  explicit LabelEncoder(std::span<const std::string> labels);

  std::size_t encode(const std::string& label) const;
  const std::string& decode(std::size_t index) const { return labels_.at(index); }
  std::size_t size() const { return labels_.size(); }

 private:
  std::vector<std::string> labels_;
  std::map<std::string, std::size_t> index_;
};

struct DatasetSplit {
  std::vector<std::size_t> train, validation, test;
  LabelEncoder encoder;
};

// Seeded shuffle, then consecutive partitions sized by largest remainder.
// One to three ratios summing to 1; throws std::invalid_argument otherwise
// or on an empty corpus.
DatasetSplit split(std::span<const std::string> labels, std::span<const double> ratios, std::uint64_t seed);

/// Directory-of-PGM corpus; each subdirectory name is a label.
struct LabelledCorpus {
  std::vector<GrayImage> images;
  std::vector<std::string> labels;
};

LabelledCorpus load_corpus(const std::filesystem::path& root, int target_size);

struct EpochRecord {
  std::size_t epoch = 0;  // 0 is the untrained baseline
  double lr = 0.0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
};

struct TrainResult {
  ParameterStore<float> params;  // best-validation checkpoint
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  double best_val_loss = 0.0;
  bool early_stopped = false;
  bool diverged = false;
};

// Mini-batch classification training with categorical cross-entropy.
// Sample i of epoch e is augmented with Rng(mix_seed(seed, e, i)). Without
// a validation set the training loss is monitored instead.
TrainResult train(const NetworkSpec& spec, const Dataset& train_set, const Dataset& validation,
                  const TrainingConfig& config, const AugmentConfig& augmentation,
                  const ParameterStore<float>* initial = nullptr);

void write_history_csv(std::span<const EpochRecord> history, std::ostream& out);

double accuracy(const NetworkSpec& spec, const ParameterStore<float>& params, const Dataset& data);

struct HeadSample {
  Tensor<float> features;  // pooled, rank 1
  bool object = false;
  BBox box;  // meaningful when object
};

struct HeadTrainResult {
  HeadParams params;
  std::vector<EpochRecord> class_history;
  std::vector<EpochRecord> bbox_history;
  double val_bbox_mse = 0.0;  // over validation positives
  double val_class_accuracy = 0.0;
};

// The class branch learns cross-entropy on every sample, the box branch
// mean squared error on the positives only.
HeadTrainResult train_detector_head(const DetectorHead& head, std::span<const HeadSample> train_set,
                                    std::span<const HeadSample> validation, const TrainingConfig& config);

struct GradientCheckConfig {
  std::size_t coordinates = 100;
  double step = 1e-5;
  std::uint64_t seed = 0;
};

struct GradientCheckReport {
  double max_relative_error = 0.0;
  std::size_t coordinates = 0;
  std::size_t resampled = 0;  // draws skipped because a perturbation crossed a kink
  bool finite = true;
};

// Central differences in double precision on randomly chosen parameters.
// Softmax networks use cross-entropy against `label`; others use
// 0.5 * ||output - target||^2.
GradientCheckReport gradient_check(const NetworkSpec& spec, const ParameterStore<double>& params,
                                   const Tensor<double>& input, std::size_t label, const Tensor<double>* target,
                                   const GradientCheckConfig& config = {});

}  // namespace blpnet
