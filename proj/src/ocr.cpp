#include "blpnet/ocr.hpp"

#include <chrono>
#include <fstream>
#include <set>
#include <sstream>

#include "blpnet/wordmap.hpp"

namespace blpnet {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

}  // namespace

CharClassSet CharClassSet::parse(std::string_view text, std::size_t expected) {
  CharClassSet set;
  std::set<std::string> seen;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    auto line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) throw std::runtime_error("class map line " + std::to_string(line_no) + " is empty");
    if (!seen.insert(std::string(line)).second)
      throw std::runtime_error("class map line " + std::to_string(line_no) + ": duplicate label '" +
                               std::string(line) + "'");
    set.labels_.emplace_back(line);
  }
  if (set.labels_.size() != expected)
    throw std::runtime_error("class map has " + std::to_string(set.labels_.size()) + " labels, expected " +
                             std::to_string(expected));
  return set;
}

CharClassSet CharClassSet::load(const std::filesystem::path& path, std::size_t expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open class map " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), expected);
}

NetworkSpec ocr_network_spec(std::size_t classes, std::size_t input_size, double dropout_rate) {
  std::vector<LayerSpec> layers;
  for (std::size_t filters : {16u, 32u, 64u, 128u, 256u}) {
    layers.push_back(LayerSpec::conv2x2(filters));
    layers.push_back(LayerSpec::relu());
    layers.push_back(LayerSpec::maxpool2());
    layers.push_back(LayerSpec::dropout(dropout_rate));
  }
  layers.push_back(LayerSpec::flatten());
  layers.push_back(LayerSpec::dense(256));
  layers.push_back(LayerSpec::relu());
  layers.push_back(LayerSpec::dense(512));
  layers.push_back(LayerSpec::relu());
  layers.push_back(LayerSpec::dropout(dropout_rate));
  layers.push_back(LayerSpec::dense(classes));
  layers.push_back(LayerSpec::softmax());
  return NetworkSpec({input_size, input_size, 1}, std::move(layers));
}

Recognition recognize_char(const GrayImage& patch, const OcrModel& model) {
  const auto& in = model.spec.input_shape;
  if (in.size() != 3 || in[2] != 1 || static_cast<std::size_t>(patch.rows()) != in[0] ||
      static_cast<std::size_t>(patch.cols()) != in[1])
    throw ShapeError("recognize_char: patch " + std::to_string(patch.rows()) + "x" + std::to_string(patch.cols()) +
                     " does not match network input " + to_string(in));
  const auto probs = predict(model.spec, model.params, to_tensor(patch));
  if (probs.size() != model.classes.size())
    throw ShapeError("recognize_char: network has " + std::to_string(probs.size()) + " outputs but the class map has " +
                     std::to_string(model.classes.size()) + " labels");
  std::size_t best = 0;
  for (std::size_t i = 1; i < probs.size(); ++i)
    if (probs[i] > probs[best]) best = i;
  return {best, model.classes.label(best), static_cast<double>(probs[best]), 0};
}

Recognition recognize_char(const CharacterCrop& crop, const OcrModel& model) {
  auto r = recognize_char(crop.patch, model);
  r.row = crop.row;
  return r;
}

PlateReading recognize_plate(const GrayImage& plate, const OcrModel& model, const WordMapTable& words,
                             const OcrConfig& config) {
  config.fista.validate();
  PlateReading reading;
  if (plate.size() == 0) {
    reading.unreadable = true;
    return reading;
  }

  auto t0 = Clock::now();
  const bool flat = sharpness(plate) < config.sharpness_floor;
  reading.times.sharpness_ms = ms_since(t0);
  if (flat) {
    reading.unreadable = true;
    return reading;
  }

  t0 = Clock::now();
  Segmentation best = segment_characters(plate, config.segment, config.force_model);
  reading.times.segment_ms += ms_since(t0);

  const std::size_t min_chars = config.segment.min_chars;
  for (std::size_t r = 1; best.crops.size() < min_chars && r <= config.max_retries && !config.kernel_bank.empty();
       ++r) {
    reading.retries = r;
    FistaConfig fc = config.fista;
    fc.lambda = config.fista.lambda * std::pow(config.fista.decay, static_cast<double>(r - 1));
    t0 = Clock::now();
    const auto restored = fista_deblur(plate, config.kernel_bank[(r - 1) % config.kernel_bank.size()], fc);
    reading.times.deblur_ms += ms_since(t0);
    t0 = Clock::now();
    auto attempt = segment_characters(restored.image, config.segment, config.force_model);
    reading.times.segment_ms += ms_since(t0);
    if (attempt.crops.size() > best.crops.size()) best = std::move(attempt);
  }

  reading.segmented = best.crops.size();
  reading.model = best.model;
  reading.fallback_used = best.fallback_used;
  if (best.crops.empty()) {
    reading.unreadable = true;
    return reading;
  }

  t0 = Clock::now();
  for (const auto& crop : best.crops) reading.chars.push_back(recognize_char(crop, model));
  for (const auto& c : reading.chars) reading.raw += c.label;
  reading.times.classify_ms = ms_since(t0);

  t0 = Clock::now();
  reading.plate = map_plate(reading.chars, words);
  reading.times.wordmap_ms = ms_since(t0);
  return reading;
}

}  // namespace blpnet
