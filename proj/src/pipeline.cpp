#include "blpnet/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <exception>
#include <fstream>
#include <iomanip>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "blpnet/weights_io.hpp"

namespace blpnet {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

}  // namespace

PipelineConfig PipelineConfig::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  if (!j.is_object()) throw ConfigError("config " + path.string() + " must be a JSON object");

  static const std::set<std::string> known = {
      "vehicle_head", "plate_head",  "ocr_weights", "class_map", "word_map",  "vehicle_threshold",
      "plate_threshold", "plate_padding", "min_chars", "max_retries", "fista_lambda", "fista_decay",
      "crop_size", "seed", "queue_depth"};
  for (const auto& [key, value] : j.items())
    if (!known.count(key)) throw ConfigError("config " + path.string() + ": unknown key '" + key + "'");

  PipelineConfig c;
  const fs::path base = path.parent_path();
  try {
    auto file = [&](const char* key, fs::path& out) {
      if (!j.contains(key)) return;
      fs::path p = j.at(key).get<std::string>();
      out = p.is_absolute() ? p : base / p;
    };
    file("vehicle_head", c.vehicle_head);
    file("plate_head", c.plate_head);
    file("ocr_weights", c.ocr_weights);
    file("class_map", c.class_map);
    file("word_map", c.word_map);
    auto number = [&](const char* key, auto& out) {
      if (j.contains(key)) out = j.at(key).get<std::decay_t<decltype(out)>>();
    };
    number("vehicle_threshold", c.vehicle_threshold);
    number("plate_threshold", c.plate_threshold);
    number("plate_padding", c.plate_padding);
    number("min_chars", c.min_chars);
    number("max_retries", c.max_retries);
    number("fista_lambda", c.fista_lambda);
    number("fista_decay", c.fista_decay);
    number("crop_size", c.crop_size);
    number("seed", c.seed);
    number("queue_depth", c.queue_depth);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  c.validate();
  return c;
}

void PipelineConfig::validate() const {
  auto in_unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (!in_unit(vehicle_threshold) || !in_unit(plate_threshold))
    throw ConfigError("detection thresholds must lie in [0, 1]");
  if (!(plate_padding >= 0.0 && plate_padding < 1.0)) throw ConfigError("plate_padding must lie in [0, 1)");
  if (crop_size < 8) throw ConfigError("crop_size must be at least 8");
  if (queue_depth == 0) throw ConfigError("queue_depth must be at least 1");
  if (!(fista_lambda > 0.0) || !(fista_decay > 0.0 && fista_decay <= 1.0))
    throw ConfigError("fista_lambda must be positive and fista_decay in (0, 1]");
}

Models Models::load(const PipelineConfig& config) {
  config.validate();
  const std::pair<const char*, const fs::path*> required[] = {{"vehicle_head", &config.vehicle_head},
                                                               {"plate_head", &config.plate_head},
                                                               {"ocr_weights", &config.ocr_weights},
                                                               {"class_map", &config.class_map}};
  for (const auto& [key, p] : required)
    if (p->empty()) throw ConfigError(std::string("config is missing ") + key);
  Models m;
  try {
    m.backbone = std::make_shared<ToyBackbone>();
    std::tie(m.vehicle_head, m.vehicle_params) = load_head(config.vehicle_head);
    std::tie(m.plate_head, m.plate_params) = load_head(config.plate_head);
    const auto channels = m.backbone->output_shape().back();
    for (const auto* h : {&m.vehicle_head, &m.plate_head})
      if (h->feature_dim != channels)
        throw ConfigError("head expects " + std::to_string(h->feature_dim) + " features but the backbone yields " +
                          std::to_string(channels));
    m.ocr.classes = CharClassSet::load(config.class_map);
    m.ocr.spec = ocr_network_spec(m.ocr.classes.size(), static_cast<std::size_t>(config.crop_size));
    m.ocr.params = load_weights(config.ocr_weights);
    validate_params(m.ocr.spec, m.ocr.params);
    if (!config.word_map.empty()) m.words = load_table(config.word_map);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  m.ocr_config.segment.min_chars = config.min_chars;
  m.ocr_config.segment.target_size = config.crop_size;
  m.ocr_config.max_retries = config.max_retries;
  m.ocr_config.fista.lambda = config.fista_lambda;
  m.ocr_config.fista.decay = config.fista_decay;
  return m;
}

namespace {

struct Detected {
  FrameResult result;
  GrayImage plate_crop;
  bool run_ocr = false;
};

Detected detect_stages(const GrayImage& frame, const Models& m, const PipelineConfig& c, FrameResult r) {
  Detected d;
  try {
    auto t0 = Clock::now();
    r.vehicle = detect(frame, *m.backbone, m.vehicle_head, m.vehicle_params, c.vehicle_threshold, Stage::Vehicle);
    r.times.vehicle_ms = ms_since(t0);
    if (r.vehicle) {
      t0 = Clock::now();
      const GrayImage vehicle = crop(frame, r.vehicle->bbox);
      auto plate = detect(vehicle, *m.backbone, m.plate_head, m.plate_params, c.plate_threshold, Stage::Plate);
      if (plate) {
        BBox b = plate->bbox;
        const double px = c.plate_padding * (b.x_max - b.x_min), py = c.plate_padding * (b.y_max - b.y_min);
        b = {std::max(0.0, b.x_min - px), std::max(0.0, b.y_min - py), std::min(1.0, b.x_max + px),
             std::min(1.0, b.y_max + py)};
        plate->bbox = b.within(r.vehicle->bbox);
        r.plate = plate;
        d.plate_crop = crop(frame, plate->bbox);
        d.run_ocr = true;
      }
      r.times.plate_ms = ms_since(t0);
    }
  } catch (const std::exception& e) {
    r.error = e.what();
    d.run_ocr = false;
  }
  d.result = std::move(r);
  return d;
}

FrameResult ocr_stage(Detected d, const Models& m) {
  FrameResult r = std::move(d.result);
  if (d.run_ocr) {
    const auto t0 = Clock::now();
    try {
      r.reading = recognize_plate(d.plate_crop, m.ocr, m.words, m.ocr_config);
    } catch (const std::exception& e) {
      r.error = e.what();
    }
    r.times.ocr_ms = ms_since(t0);
  }
  return r;
}

Detected decode_and_detect(const fs::path& path, std::size_t index, const Models& m, const PipelineConfig& c) {
  const auto t0 = Clock::now();
  FrameResult r;
  r.frame = index;
  r.source = path.filename().string();
  GrayImage frame;
  try {
    frame = read_image(path);
  } catch (const std::exception& e) {
    r.error = e.what();
    r.times.decode_ms = ms_since(t0);
    Detected d;
    d.result = std::move(r);
    return d;
  }
  r.times.decode_ms = ms_since(t0);
  return detect_stages(frame, m, c, std::move(r));
}

template <typename T>
class BoundedQueue {
 public:
  explicit BoundedQueue(std::size_t depth) : depth_(depth) {}

  void push(T item) {
    std::unique_lock lock(mutex_);
    not_full_.wait(lock, [&] { return items_.size() < depth_; });
    items_.push_back(std::move(item));
    not_empty_.notify_one();
  }

  void close() {
    std::lock_guard lock(mutex_);
    closed_ = true;
    not_empty_.notify_all();
  }

  std::optional<T> pop() {
    std::unique_lock lock(mutex_);
    not_empty_.wait(lock, [&] { return !items_.empty() || closed_; });
    if (items_.empty()) return std::nullopt;
    T item = std::move(items_.front());
    items_.pop_front();
    not_full_.notify_one();
    return item;
  }

 private:
  std::size_t depth_;
  std::deque<T> items_;
  bool closed_ = false;
  std::mutex mutex_;
  std::condition_variable not_empty_, not_full_;
};

nlohmann::ordered_json bbox_json(const std::optional<Detection>& d) {
  if (!d) return nullptr;
  return {d->bbox.x_min, d->bbox.y_min, d->bbox.x_max, d->bbox.y_max};
}

StageStats stage_stats(std::vector<double> v) {
  StageStats s;
  if (v.empty()) return s;
  for (const double x : v) s.mean_ms += x;
  s.mean_ms /= static_cast<double>(v.size());
  std::sort(v.begin(), v.end());
  const auto k = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(v.size()))) - 1;
  s.p95_ms = v[std::min(k, v.size() - 1)];
  return s;
}

}  // namespace

FrameResult process_frame(const GrayImage& frame, const Models& models, const PipelineConfig& config) {
  const auto t0 = Clock::now();
  auto r = ocr_stage(detect_stages(frame, models, config, FrameResult{}), models);
  r.times.total_ms = ms_since(t0);
  return r;
}

FrameResult process_frame_file(const fs::path& path, const Models& models, const PipelineConfig& config) {
  const auto t0 = Clock::now();
  auto r = ocr_stage(decode_and_detect(path, 0, models, config), models);
  r.times.total_ms = ms_since(t0);
  return r;
}

std::string to_json_line(const FrameResult& r, bool deterministic) {
  nlohmann::ordered_json j;
  j["frame"] = r.frame;
  j["source"] = r.source;
  j["vehicle_bbox"] = bbox_json(r.vehicle);
  j["plate_bbox"] = bbox_json(r.plate);
  auto chars = nlohmann::ordered_json::array();
  if (r.reading)
    for (const auto& c : r.reading->chars) chars.push_back({{"label", c.label}, {"conf", c.confidence}});
  j["chars"] = chars;
  j["plate_string"] = r.reading && !r.reading->unreadable ? nlohmann::ordered_json(r.reading->plate) : nullptr;
  if (r.reading) {
    j["unreadable"] = r.reading->unreadable;
    j["retries"] = r.reading->retries;
  }
  auto t = nlohmann::ordered_json::object();
  if (!deterministic) {
    t["decode"] = r.times.decode_ms;
    t["vehicle"] = r.times.vehicle_ms;
    t["plate"] = r.times.plate_ms;
    t["ocr"] = r.times.ocr_ms;
    t["total"] = r.times.total_ms;
  }
  j["timings_ms"] = t;
  if (!r.error.empty()) j["error"] = r.error;
  return j.dump(-1, ' ', false, nlohmann::ordered_json::error_handler_t::replace);
}

TimingStats summarize(const std::vector<FrameResult>& results, double elapsed_s) {
  TimingStats s;
  s.frames = results.size();
  s.elapsed_s = elapsed_s;
  if (s.frames > 0 && elapsed_s > 0) s.fps = static_cast<double>(s.frames) / elapsed_s;
  std::vector<double> dec, veh, pl, ocr, tot;
  for (const auto& r : results) {
    dec.push_back(r.times.decode_ms);
    veh.push_back(r.times.vehicle_ms);
    pl.push_back(r.times.plate_ms);
    ocr.push_back(r.times.ocr_ms);
    tot.push_back(r.times.total_ms);
  }
  s.decode = stage_stats(dec);
  s.vehicle = stage_stats(veh);
  s.plate = stage_stats(pl);
  s.ocr = stage_stats(ocr);
  s.total = stage_stats(tot);
  return s;
}

std::string format_stats(const TimingStats& s) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(2);
  out << "frames " << s.frames << ", elapsed " << s.elapsed_s << " s, fps ";
  if (s.fps) {
    out << *s.fps;
  } else {
    out << "undefined";
  }
  out << "\n";
  const std::pair<const char*, const StageStats*> rows[] = {
      {"decode", &s.decode}, {"vehicle", &s.vehicle}, {"plate", &s.plate}, {"ocr", &s.ocr}, {"total", &s.total}};
  for (const auto& [name, st] : rows)
    out << std::left << std::setw(8) << name << " mean " << st->mean_ms << " ms, p95 " << st->p95_ms << " ms\n";
  return out.str();
}

std::vector<fs::path> list_frames(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataError("frame directory not found: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const auto ext = e.path().extension().string();
    if (ext == ".pgm" || ext == ".ppm" || ext == ".pnm" || ext == ".png") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

TimingStats run_stream(const fs::path& dir, const Models& models, const PipelineConfig& config,
                       const RunOptions& options, std::ostream& out, std::vector<FrameResult>* results) {
  const auto files = list_frames(dir);
  std::vector<FrameResult> done;
  const auto start = Clock::now();
  auto emit = [&](FrameResult r) {
    out << to_json_line(r, options.deterministic) << '\n';
    done.push_back(std::move(r));
  };

  if (!options.pipelined) {
    for (std::size_t i = 0; i < files.size(); ++i) {
      const auto t0 = Clock::now();
      auto r = ocr_stage(decode_and_detect(files[i], i, models, config), models);
      r.times.total_ms = ms_since(t0);
      emit(std::move(r));
    }
  } else {
    BoundedQueue<std::pair<Detected, Clock::time_point>> queue(config.queue_depth);
    std::exception_ptr failure;
    std::thread producer([&] {
      try {
        for (std::size_t i = 0; i < files.size(); ++i) {
          const auto t0 = Clock::now();
          queue.push({decode_and_detect(files[i], i, models, config), t0});
        }
      } catch (...) {
        failure = std::current_exception();
      }
      queue.close();
    });
    while (auto item = queue.pop()) {
      auto r = ocr_stage(std::move(item->first), models);
      r.times.total_ms = ms_since(item->second);
      emit(std::move(r));
    }
    producer.join();
    if (failure) std::rethrow_exception(failure);
  }
  out.flush();
  const double elapsed = std::chrono::duration<double>(Clock::now() - start).count();
  auto stats = summarize(done, elapsed);
  if (results) *results = std::move(done);
  return stats;
}

std::vector<BenchmarkFixture> load_fixtures(const fs::path& dir) {
  const auto manifest = dir / "manifest.tsv";
  std::ifstream in(manifest);
  if (!in) throw DataError("fixture manifest not found: " + manifest.string());
  std::vector<BenchmarkFixture> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw DataError(manifest.string() + ":" + std::to_string(line_no) + ": expected file<TAB>classes");
    BenchmarkFixture f;
    f.image = dir / line.substr(0, tab);
    std::istringstream cls(line.substr(tab + 1));
    std::size_t c;
    while (cls >> c) f.classes.push_back(c);
    if (f.classes.empty() || !cls.eof())
      throw DataError(manifest.string() + ":" + std::to_string(line_no) + ": bad class list");
    out.push_back(std::move(f));
  }
  return out;
}

BenchmarkReport benchmark(const std::vector<BenchmarkFixture>& fixtures, const Models& models) {
  BenchmarkReport report;
  std::map<std::pair<int, std::size_t>, BenchmarkRow> rows;
  for (const auto& f : fixtures) {
    GrayImage plate;
    try {
      plate = read_image(f.image);
    } catch (const std::exception& e) {
      throw DataError(e.what());
    }
    for (const auto model : {SegmentationModel::ChanVese, SegmentationModel::Rsf}) {
      OcrConfig cfg = models.ocr_config;
      cfg.force_model = model;
      const auto t0 = Clock::now();
      const auto reading = recognize_plate(plate, models.ocr, models.words, cfg);
      BenchmarkPlate p;
      p.model = model;
      p.truth = f.classes;
      p.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
      for (const auto& c : reading.chars) p.predicted.push_back(c.class_index);

      auto& row = rows[{static_cast<int>(model), f.classes.size()}];
      row.model = model;
      row.chars = f.classes.size();
      ++row.plates;
      row.total += p.truth.size();
      for (std::size_t i = 0; i < std::min(p.truth.size(), p.predicted.size()); ++i) row.hits += p.truth[i] == p.predicted[i];
      row.mean_seconds += p.seconds;
      report.plates.push_back(std::move(p));
    }
  }
  for (auto& [key, row] : rows) {
    row.accuracy = row.total ? 100.0 * static_cast<double>(row.hits) / static_cast<double>(row.total) : 0.0;
    row.mean_seconds /= static_cast<double>(row.plates);
    report.rows.push_back(row);
  }
  return report;
}

std::string format_benchmark(const BenchmarkReport& report) {
  // Published OCR accuracy (%) and time (s) per segmentation model and character count.
  static const std::map<std::pair<int, std::size_t>, std::pair<double, double>> published = {
      {{0, 4}, {90, 0.302}}, {{0, 5}, {83, 0.395}}, {{0, 6}, {81, 0.432}}, {{0, 8}, {80, 0.502}},
      {{1, 4}, {95, 0.256}}, {{1, 5}, {93, 0.312}}, {{1, 6}, {90, 0.333}}, {{1, 8}, {89, 0.398}}};
  std::ostringstream out;
  if (report.rows.empty()) {
    out << "no fixtures\n";
    return out.str();
  }
  out << std::left << std::setw(10) << "model" << std::right << std::setw(7) << "chars" << std::setw(8) << "plates"
      << std::setw(12) << "accuracy%" << std::setw(10) << "time_s" << std::setw(12) << "ref_acc%" << std::setw(10)
      << "ref_s" << "\n";
  out << std::fixed;
  for (const auto& r : report.rows) {
    out << std::left << std::setw(10) << (std::string(to_string(r.model)) + " model") << std::right << std::setw(7)
        << r.chars << std::setw(8) << r.plates << std::setw(12) << std::setprecision(1) << r.accuracy << std::setw(10)
        << std::setprecision(3) << r.mean_seconds;
    const auto it = published.find({static_cast<int>(r.model), r.chars});
    if (it != published.end()) {
      out << std::setw(12) << std::setprecision(0) << it->second.first << std::setw(10) << std::setprecision(3)
          << it->second.second;
    } else {
      out << std::setw(12) << "-" << std::setw(10) << "-";
    }
    out << "\n";
  }
  out << "ref columns: published figures on the original hardware and data, for context only\n";
  out << "ref vehicle-detection validation MSE: 0.0152\n";
  return out.str();
}

}  // namespace blpnet
