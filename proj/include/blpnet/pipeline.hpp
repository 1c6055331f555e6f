#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "blpnet/detector.hpp"
#include "blpnet/ocr.hpp"
#include "blpnet/wordmap.hpp"

namespace blpnet {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct PipelineConfig {
  std::filesystem::path vehicle_head, plate_head, ocr_weights, class_map, word_map;
  double vehicle_threshold = 0.5;
  double plate_threshold = 0.5;
  double plate_padding = 0.08;  // fraction of the plate box added on each side before OCR
  std::size_t min_chars = 4;
  std::size_t max_retries = 3;
  double fista_lambda = 0.02;
  double fista_decay = 0.5;
  int crop_size = 64;
  std::uint64_t seed = 0;
  std::size_t queue_depth = 4;

  // Relative paths resolve against the config file's directory. Throws ConfigError.
  static PipelineConfig load(const std::filesystem::path& path);
  void validate() const;
};

struct Models {
  std::shared_ptr<const FeatureProvider> backbone;
  DetectorHead vehicle_head;
  HeadParams vehicle_params;
  DetectorHead plate_head;
  HeadParams plate_params;
  OcrModel ocr;
  WordMapTable words;
  OcrConfig ocr_config;

  // Every referenced file must exist and parse; throws ConfigError.
  static Models load(const PipelineConfig& config);
};

struct FrameTimes {
  double decode_ms = 0, vehicle_ms = 0, plate_ms = 0, ocr_ms = 0, total_ms = 0;
};

struct FrameResult {
  std::size_t frame = 0;
  std::string source;
  std::optional<Detection> vehicle;
  std::optional<Detection> plate;  // frame coordinates
  std::optional<PlateReading> reading;
  std::string error;
  FrameTimes times;
};

// Vehicle detect -> crop -> plate detect -> crop -> recognize. Any stage
// returning nothing ends the cascade for that frame.
FrameResult process_frame(const GrayImage& frame, const Models& models, const PipelineConfig& config);

// Decode failures are recorded on the result rather than thrown.
FrameResult process_frame_file(const std::filesystem::path& path, const Models& models, const PipelineConfig& config);

// One JSON object per line. Deterministic output leaves timings_ms empty.
std::string to_json_line(const FrameResult& result, bool deterministic);

struct StageStats {
  double mean_ms = 0;
  double p95_ms = 0;
};

struct TimingStats {
  std::size_t frames = 0;
  double elapsed_s = 0;
  std::optional<double> fps;  // empty when no frame was processed
  StageStats decode, vehicle, plate, ocr, total;
};

TimingStats summarize(const std::vector<FrameResult>& results, double elapsed_s);
std::string format_stats(const TimingStats& stats);

struct RunOptions {
  bool pipelined = true;
  bool deterministic = false;
};

// Image files of `dir` in lexicographic order; throws DataError when the directory is missing.
std::vector<std::filesystem::path> list_frames(const std::filesystem::path& dir);

// Streams JSON lines to `out` in frame order. Pipelined mode runs detection
// and recognition on two threads joined by a bounded FIFO.
TimingStats run_stream(const std::filesystem::path& dir, const Models& models, const PipelineConfig& config,
                       const RunOptions& options, std::ostream& out, std::vector<FrameResult>* results = nullptr);

struct BenchmarkFixture {
  std::filesystem::path image;
  std::vector<std::size_t> classes;
};

// manifest.tsv: file<TAB>space-separated class indices. Throws DataError.
std::vector<BenchmarkFixture> load_fixtures(const std::filesystem::path& dir);

struct BenchmarkRow {
  SegmentationModel model = SegmentationModel::ChanVese;
  std::size_t chars = 0;
  std::size_t plates = 0;
  std::size_t hits = 0;   // positionally correct characters
  std::size_t total = 0;  // ground-truth characters
  double accuracy = 0;    // percent
  double mean_seconds = 0;
};

struct BenchmarkPlate {
  SegmentationModel model = SegmentationModel::ChanVese;
  std::vector<std::size_t> truth;
  std::vector<std::size_t> predicted;
  double seconds = 0;
};

struct BenchmarkReport {
  std::vector<BenchmarkRow> rows;
  std::vector<BenchmarkPlate> plates;
};

BenchmarkReport benchmark(const std::vector<BenchmarkFixture>& fixtures, const Models& models);
std::string format_benchmark(const BenchmarkReport& report);

}  // namespace blpnet
