#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "blpnet/pipeline.hpp"
#include "blpnet/report.hpp"
#include "blpnet/synth.hpp"
#include "blpnet/training.hpp"
#include "blpnet/weights_io.hpp"

namespace fs = std::filesystem;
using namespace blpnet;

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 1;
constexpr int kDataError = 2;

int run_detect(const fs::path& dir, const fs::path& config_path, bool deterministic, std::uint64_t seed,
               bool sequential, const std::string& out_path) {
  auto config = PipelineConfig::load(config_path);
  if (deterministic) config.seed = seed;
  const auto models = Models::load(config);
  RunOptions options;
  options.pipelined = !sequential;
  options.deterministic = deterministic;
  TimingStats stats;
  if (out_path.empty()) {
    stats = run_stream(dir, models, config, options, std::cout);
  } else {
    std::ofstream out(out_path, std::ios::binary);
    if (!out) throw DataError("cannot write " + out_path);
    stats = run_stream(dir, models, config, options, out);
  }
  std::cerr << format_stats(stats);
  return kOk;
}

std::size_t class_index(const std::string& name, const CharClassSet& classes) {
  const auto& labels = classes.labels();
  const auto it = std::find(labels.begin(), labels.end(), name);
  if (it != labels.end()) return static_cast<std::size_t>(it - labels.begin());
  std::size_t idx = 0;
  std::istringstream in(name);
  if (in >> idx && in.eof() && idx < classes.size()) return idx;
  throw DataError("corpus directory '" + name + "' is neither a class label nor a class index");
}

int run_train(const fs::path& data, const fs::path& config_path, const fs::path& out, std::size_t epochs,
              std::size_t batch, double lr, std::uint64_t seed, double val_fraction, const std::string& history) {
  const auto config = PipelineConfig::load(config_path);
  if (config.class_map.empty()) throw ConfigError("config is missing class_map");
  CharClassSet classes;
  try {
    classes = CharClassSet::load(config.class_map);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  LabelledCorpus corpus;
  try {
    corpus = load_corpus(data, config.crop_size);
  } catch (const std::exception& e) {
    throw DataError(e.what());
  }
  Dataset all;
  all.images = std::move(corpus.images);
  for (const auto& l : corpus.labels) all.labels.push_back(class_index(l, classes));

  const double ratios[] = {1.0 - val_fraction, val_fraction};
  const auto parts = split(corpus.labels, std::span<const double>(ratios, val_fraction > 0 ? 2 : 1), seed);
  const auto train_set = all.subset(parts.train), val_set = all.subset(parts.validation);

  TrainingConfig tc;
  tc.optimizer = AdamConfig{lr};
  tc.epochs = epochs;
  tc.batch_size = batch;
  tc.seed = seed;
  const auto spec = ocr_network_spec(classes.size(), static_cast<std::size_t>(config.crop_size));
  const auto result = train(spec, train_set, val_set, tc, AugmentConfig{});
  save_weights(result.params, out);
  if (!history.empty()) {
    std::ofstream h(history);
    write_history_csv(result.history, h);
  }
  const auto& last = result.history.back();
  std::cerr << "epochs run " << last.epoch << ", best epoch " << result.best_epoch << ", best monitored loss "
            << result.best_val_loss << (result.early_stopped ? " (early stop)" : "")
            << (result.diverged ? " (diverged; best checkpoint kept)" : "") << "\n";
  if (val_set.size() > 0) std::cerr << "validation accuracy " << accuracy(spec, result.params, val_set) << "\n";
  return kOk;
}

int run_benchmark(const fs::path& fixtures, const fs::path& config_path) {
  const auto config = PipelineConfig::load(config_path);
  const auto models = Models::load(config);
  const auto report = benchmark(load_fixtures(fixtures), models);
  std::cout << format_benchmark(report);
  return kOk;
}

int run_param_report(const std::string& which) {
  if (which == "ocr" || which == "all") std::cout << format_report(ocr_param_report());
  if (which == "all") std::cout << "\n";
  if (which == "detector" || which == "all") std::cout << format_report(detector_param_report());
  return kOk;
}

int run_make_fixtures(const fs::path& out, std::size_t frames, std::size_t plates, std::size_t per_class,
                      std::size_t head_samples, std::uint64_t seed) {
  const std::size_t classes = 10;
  fs::create_directories(out / "frames");
  fs::create_directories(out / "fixtures");

  const auto corpus = glyph_corpus(classes, per_class, mix_seed(seed, 1));
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto dir = out / "corpus" / std::to_string(corpus.labels[i]);
    fs::create_directories(dir);
    write_pgm(corpus.images[i], dir / (std::to_string(i) + ".pgm"));
  }

  for (std::size_t i = 0; i < frames; ++i) {
    Rng rng(mix_seed(seed, 2, i));
    const auto f = render_frame(mixed_frame_kind(i), rng);
    std::ostringstream name;
    name << "frame_" << std::setw(5) << std::setfill('0') << i << ".pgm";
    write_pgm(f.image, out / "frames" / name.str());
  }

  std::ofstream manifest(out / "fixtures" / "manifest.tsv");
  manifest << "# file\tclass indices\n";
  for (const std::size_t n : {4u, 5u, 6u, 8u})
    for (std::size_t k = 0; k < plates; ++k) {
      Rng rng(mix_seed(seed, 3, n * 1000 + k));
      std::vector<std::size_t> cls;
      for (std::size_t i = 0; i < n; ++i) cls.push_back(uniform_index(rng, classes));
      const auto plate = render_plate(cls, PlateLayout{}, rng);
      const auto name = "plate_" + std::to_string(n) + "_" + std::to_string(k) + ".pgm";
      write_pgm(plate.image, out / "fixtures" / name);
      manifest << name << '\t';
      for (std::size_t i = 0; i < n; ++i) manifest << (i ? " " : "") << cls[i];
      manifest << '\n';
    }

  const auto heads = train_toy_heads(head_samples, mix_seed(seed, 4));
  save_weights(join_head_params(heads.vehicle.params), out / "vehicle_head.blpw");
  save_weights(join_head_params(heads.plate.params), out / "plate_head.blpw");
  std::cerr << "vehicle head: class accuracy " << heads.vehicle.val_class_accuracy << ", bbox mse "
            << heads.vehicle.val_bbox_mse << "\nplate head: class accuracy " << heads.plate.val_class_accuracy
            << ", bbox mse " << heads.plate.val_bbox_mse << "\n";

  const fs::path data_dir = BLPNET_DATA_DIR;
  fs::copy_file(data_dir / "classmap_bn.txt", out / "classmap.txt", fs::copy_options::overwrite_existing);
  fs::copy_file(data_dir / "wordmap_bn.tsv", out / "wordmap.tsv", fs::copy_options::overwrite_existing);
  nlohmann::ordered_json config = {{"vehicle_head", "vehicle_head.blpw"},
                                   {"plate_head", "plate_head.blpw"},
                                   {"ocr_weights", "ocr.blpw"},
                                   {"class_map", "classmap.txt"},
                                   {"word_map", "wordmap.tsv"},
                                   {"vehicle_threshold", 0.5},
                                   {"plate_threshold", 0.5},
                                   {"min_chars", 4},
                                   {"max_retries", 3},
                                   {"fista_lambda", 0.02},
                                   {"fista_decay", 0.5},
                                   {"crop_size", 64},
                                   {"seed", seed},
                                   {"queue_depth", 4}};
  std::ofstream(out / "config.json") << config.dump(2) << "\n";
  std::cerr << "wrote " << out.string() << "; train the OCR net with: blpnet train-ocr --data "
            << (out / "corpus").string() << " --config " << (out / "config.json").string() << " --out "
            << (out / "ocr.blpw").string() << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bengali license plate detection and recognition"};
  app.require_subcommand(1);

  auto* detect_cmd = app.add_subcommand("detect", "Run the cascade over a directory of frames");
  fs::path frames_dir, config_path;
  bool deterministic = false, pipeline_flag = false, sequential = false;
  std::uint64_t seed = 0;
  std::string out_path;
  detect_cmd->add_option("dir", frames_dir, "Directory of numbered PGM/PPM/PNG frames")->required();
  detect_cmd->add_option("--config", config_path, "Pipeline JSON config")->required();
  detect_cmd->add_flag("--deterministic", deterministic, "Byte-stable output (timings omitted)");
  detect_cmd->add_option("--seed", seed, "Seed recorded for deterministic runs");
  auto* pipe_opt = detect_cmd->add_flag("--pipeline", pipeline_flag, "Stage-pipelined execution (default)");
  detect_cmd->add_flag("--sequential", sequential, "Single-threaded execution")->excludes(pipe_opt);
  detect_cmd->add_option("--out", out_path, "JSON-lines output file (default stdout)");

  auto* train_cmd = app.add_subcommand("train-ocr", "Train the OCR network on a directory-of-PGM corpus");
  fs::path data_dir, weights_out;
  std::size_t epochs = 50, batch = 64;
  double lr = 1e-3, val_fraction = 0.2;
  std::string history;
  train_cmd->add_option("--data", data_dir, "Corpus root; subdirectory names are labels")->required();
  train_cmd->add_option("--config", config_path, "Pipeline JSON config (class map, crop size)")->required();
  train_cmd->add_option("--out", weights_out, "Output weight file")->required();
  train_cmd->add_option("--epochs", epochs)->check(CLI::PositiveNumber);
  train_cmd->add_option("--batch", batch)->check(CLI::PositiveNumber);
  train_cmd->add_option("--lr", lr)->check(CLI::NonNegativeNumber);
  train_cmd->add_option("--seed", seed);
  train_cmd->add_option("--val-fraction", val_fraction)->check(CLI::Range(0.0, 0.9));
  train_cmd->add_option("--history", history, "Write per-epoch history CSV");

  auto* bench_cmd = app.add_subcommand("benchmark", "Per-character-count OCR accuracy and timing");
  fs::path fixtures_dir;
  bench_cmd->add_option("--fixtures", fixtures_dir, "Directory with manifest.tsv")->required();
  bench_cmd->add_option("--config", config_path, "Pipeline JSON config")->required();

  auto* report_cmd = app.add_subcommand("param-report", "Trainable-parameter reconciliation");
  std::string which = "all";
  report_cmd->add_option("--spec", which, "ocr, detector or all")->check(CLI::IsMember({"ocr", "detector", "all"}));

  auto* fixtures_cmd = app.add_subcommand("make-fixtures", "Generate synthetic frames, corpus, fixtures and heads");
  fs::path fixtures_out;
  std::size_t frame_count = 40, plates = 5, per_class = 100, head_samples = 300;
  fixtures_cmd->add_option("--out", fixtures_out, "Output directory")->required();
  fixtures_cmd->add_option("--frames", frame_count);
  fixtures_cmd->add_option("--plates", plates, "Fixture plates per character count");
  fixtures_cmd->add_option("--per-class", per_class, "Corpus samples per glyph class");
  fixtures_cmd->add_option("--head-samples", head_samples, "Training samples per detector head");
  fixtures_cmd->add_option("--seed", seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (*detect_cmd) return run_detect(frames_dir, config_path, deterministic, seed, sequential, out_path);
    if (*train_cmd)
      return run_train(data_dir, config_path, weights_out, epochs, batch, lr, seed, val_fraction, history);
    if (*bench_cmd) return run_benchmark(fixtures_dir, config_path);
    if (*report_cmd) return run_param_report(which);
    if (*fixtures_cmd) return run_make_fixtures(fixtures_out, frame_count, plates, per_class, head_samples, seed);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kDataError;
  }
  return kOk;
}
