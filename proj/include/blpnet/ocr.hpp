#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "blpnet/deblur.hpp"
#include "blpnet/nn.hpp"
#include "blpnet/segment.hpp"

namespace blpnet {

inline constexpr std::size_t kOcrClasses = 60;
inline constexpr std::size_t kOcrInputSize = 64;

/// Class labels in class-index order, one per line of the class-map file.
class CharClassSet {
 public:
  // Throws std::runtime_error unless there are exactly `expected` unique, non-empty labels.
  static CharClassSet parse(std::string_view text, std::size_t expected = kOcrClasses);
  static CharClassSet load(const std::filesystem::path& path, std::size_t expected = kOcrClasses);

  std::size_t size() const { return labels_.size(); }
  const std::string& label(std::size_t index) const { return labels_.at(index); }
  const std::vector<std::string>& labels() const { return labels_; }

 private:
  std::vector<std::string> labels_;
};

// Four valid 2x2 conv blocks of 16..256 filters (plus a fifth of 256), each
// followed by ReLU, 2x2 max-pool and dropout, then Dense 256 / 512 and the
// softmax classifier.
NetworkSpec ocr_network_spec(std::size_t classes = kOcrClasses, std::size_t input_size = kOcrInputSize,
                             double dropout_rate = 0.2);

struct OcrModel {
  NetworkSpec spec;
  ParameterStore<float> params;
  CharClassSet classes;
};

struct Recognition {
  std::size_t class_index = 0;
  std::string label;
  double confidence = 0.0;
  std::size_t row = 0;
};

// Throws ShapeError when the patch does not match the network input.
Recognition recognize_char(const GrayImage& patch, const OcrModel& model);
Recognition recognize_char(const CharacterCrop& crop, const OcrModel& model);

struct OcrConfig {
  SegmentConfig segment;
  FistaConfig fista;
  std::vector<BlurKernel> kernel_bank = default_kernel_bank();
  std::size_t max_retries = 3;
  double sharpness_floor = 1e-6;
  std::optional<SegmentationModel> force_model;  // disables the CV -> RSF fallback
};

struct StageTimes {
  double sharpness_ms = 0, segment_ms = 0, deblur_ms = 0, classify_ms = 0, wordmap_ms = 0;
  double total() const { return sharpness_ms + segment_ms + deblur_ms + classify_ms + wordmap_ms; }
};

struct PlateReading {
  std::vector<Recognition> chars;
  std::string raw;    // labels concatenated in reading order
  std::string plate;  // after word mapping
  bool unreadable = false;
  std::size_t retries = 0;
  std::size_t segmented = 0;  // crops found by the accepted attempt
  SegmentationModel model = SegmentationModel::ChanVese;
  bool fallback_used = false;
  StageTimes times;
};

struct WordMapTable;

// Sharpness gate, segmentation with CV -> RSF fallback, then up to
// max_retries deblur attempts while fewer than min_chars crops are found.
// Retry r deconvolves the original plate with kernel_bank[r - 1] (cycling)
// and TV weight lambda * decay^(r - 1). The attempt with the most crops wins.
PlateReading recognize_plate(const GrayImage& plate, const OcrModel& model, const WordMapTable& words,
                             const OcrConfig& config = {});

}  // namespace blpnet
