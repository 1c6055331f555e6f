#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "blpnet/pipeline.hpp"
#include "blpnet/synth.hpp"
#include "blpnet/weights_io.hpp"

using namespace blpnet;
namespace fs = std::filesystem;

namespace {

std::string class_lines(std::size_t n) {
  std::string s;
  for (std::size_t i = 0; i < n; ++i) s += "c" + std::to_string(i) + "\n";
  return s;
}

// Zero heads score every input 0.5 and regress the fixed box in the output bias.
HeadParams fixed_head(const DetectorHead& head, const BBox& box) {
  HeadParams p{zero_params<float>(head.class_branch), zero_params<float>(head.bbox_branch)};
  auto& bias = p.bbox_params.tensors.back().value;
  bias[0] = static_cast<float>(box.x_min);
  bias[1] = static_cast<float>(box.y_min);
  bias[2] = static_cast<float>(box.x_max);
  bias[3] = static_cast<float>(box.y_max);
  return p;
}

Models fixed_models() {
  Models m;
  m.backbone = std::make_shared<ToyBackbone>();
  m.vehicle_head = m.plate_head = build_detector_head(ToyBackbone::kChannels);
  m.vehicle_params = fixed_head(m.vehicle_head, {0.1, 0.1, 0.9, 0.9});
  m.plate_params = fixed_head(m.plate_head, {0.3, 0.6, 0.7, 0.8});
  m.ocr.spec = ocr_network_spec();
  m.ocr.params = zero_params<float>(m.ocr.spec);
  m.ocr.classes = CharClassSet::parse(class_lines(kOcrClasses));
  return m;
}

PipelineConfig open_config() {
  PipelineConfig c;
  c.vehicle_threshold = 0.4;
  c.plate_threshold = 0.4;
  return c;
}

fs::path fresh_dir(const std::string& name) {
  const auto d = fs::temp_directory_path() / name;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

void write_text(const fs::path& p, const std::string& s) { std::ofstream(p) << s; }

}  // namespace

TEST_SUITE("pipeline") {
  TEST_CASE("config files: unknown keys, bad values, relative paths") {
    const auto dir = fresh_dir("blpnet_cfg_test");
    write_text(dir / "a.json", R"({"vehicle_head": "v.blpw", "min_chars": 5})");
    const auto c = PipelineConfig::load(dir / "a.json");
    CHECK(c.vehicle_head == dir / "v.blpw");
    CHECK(c.min_chars == 5);
    write_text(dir / "b.json", R"({"vehicle_treshold": 0.5})");
    CHECK_THROWS_AS(PipelineConfig::load(dir / "b.json"), ConfigError);
    write_text(dir / "c.json", R"({"plate_threshold": 1.5})");
    CHECK_THROWS_AS(PipelineConfig::load(dir / "c.json"), ConfigError);
    write_text(dir / "d.json", "{not json");
    CHECK_THROWS_AS(PipelineConfig::load(dir / "d.json"), ConfigError);
    write_text(dir / "e.json", R"({"min_chars": "four"})");
    CHECK_THROWS_AS(PipelineConfig::load(dir / "e.json"), ConfigError);
    CHECK_THROWS_AS(PipelineConfig::load(dir / "missing.json"), ConfigError);
    fs::remove_all(dir);
  }

  TEST_CASE("model loading names missing or mismatched files") {
    const auto dir = fresh_dir("blpnet_models_test");
    PipelineConfig c;
    CHECK_THROWS_AS(Models::load(c), ConfigError);
    c.vehicle_head = c.plate_head = dir / "head.blpw";
    c.ocr_weights = dir / "ocr.blpw";
    c.class_map = dir / "classes.txt";
    CHECK_THROWS_AS(Models::load(c), ConfigError);
    Rng rng(1);
    save_weights(join_head_params(init_head_params(build_detector_head(1056), rng)), c.vehicle_head);
    write_text(c.class_map, class_lines(60));
    save_weights(zero_params<float>(ocr_network_spec()), c.ocr_weights);
    try {
      Models::load(c);
      FAIL("expected a feature width mismatch");
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find("1056") != std::string::npos);
    }
    save_weights(join_head_params(init_head_params(build_detector_head(12), rng)), c.vehicle_head);
    CHECK(Models::load(c).ocr.classes.size() == 60);
    fs::remove_all(dir);
  }

  TEST_CASE("the cascade stops at the first stage without a detection") {
    auto m = fixed_models();
    auto c = open_config();
    c.vehicle_threshold = 0.6;
    Rng rng(2);
    const auto frame = render_frame(FrameKind::VehicleWithPlate, rng);
    const auto r = process_frame(frame.image, m, c);
    CHECK_FALSE(r.vehicle);
    CHECK_FALSE(r.plate);
    CHECK_FALSE(r.reading);
    CHECK(r.error.empty());
    const auto line = nlohmann::json::parse(to_json_line(r, true));
    CHECK(line["vehicle_bbox"].is_null());
    CHECK(line["plate_string"].is_null());
    CHECK(line["timings_ms"].empty());

    c.vehicle_threshold = 0.4;
    c.plate_threshold = 0.6;
    const auto r2 = process_frame(frame.image, m, c);
    CHECK(r2.vehicle);
    CHECK_FALSE(r2.plate);
    CHECK_FALSE(r2.reading);
  }

  TEST_CASE("plate boxes are padded and mapped to frame coordinates") {
    const auto m = fixed_models();
    auto c = open_config();
    c.plate_padding = 0.0;
    Rng rng(3);
    const auto r = process_frame(render_frame(FrameKind::VehicleWithPlate, rng).image, m, c);
    REQUIRE(r.plate);
    CHECK(r.plate->bbox.x_min == doctest::Approx(0.1 + 0.8 * 0.3));
    CHECK(r.plate->bbox.y_max == doctest::Approx(0.1 + 0.8 * 0.8));
    CHECK(r.reading);
  }

  TEST_CASE("corrupt frames become error records") {
    const auto dir = fresh_dir("blpnet_corrupt_test");
    write_text(dir / "bad.pgm", "P5\n10 10\n255\nxx");
    const auto r = process_frame_file(dir / "bad.pgm", fixed_models(), open_config());
    CHECK_FALSE(r.error.empty());
    CHECK_FALSE(r.vehicle);
    CHECK(nlohmann::json::parse(to_json_line(r, true)).contains("error"));
    fs::remove_all(dir);
  }

  TEST_CASE("an empty directory has no frame rate") {
    const auto dir = fresh_dir("blpnet_empty_test");
    std::ostringstream out;
    const auto s = run_stream(dir, fixed_models(), open_config(), RunOptions{}, out);
    CHECK(s.frames == 0);
    CHECK_FALSE(s.fps);
    CHECK(out.str().empty());
    CHECK(format_stats(s).find("undefined") != std::string::npos);
    CHECK_THROWS_AS(list_frames(dir / "nope"), DataError);
    fs::remove_all(dir);
  }

  TEST_CASE("sequential and pipelined runs produce identical output") {
    const auto dir = fresh_dir("blpnet_stream_test");
    Rng rng(4);
    for (std::size_t i = 0; i < 6; ++i) {
      auto f = render_frame(mixed_frame_kind(i), rng, FrameOptions{320, 180});
      write_pgm(f.image, dir / ("f" + std::to_string(i) + ".pgm"));
    }
    write_text(dir / "notes.txt", "ignored");
    const auto m = fixed_models();
    const auto c = open_config();
    std::ostringstream seq, pipe;
    RunOptions o;
    o.deterministic = true;
    o.pipelined = false;
    const auto s = run_stream(dir, m, c, o, seq);
    o.pipelined = true;
    run_stream(dir, m, c, o, pipe);
    CHECK(seq.str() == pipe.str());
    CHECK(s.frames == 6);
    REQUIRE(s.fps);
    std::istringstream lines(seq.str());
    std::string line;
    std::size_t n = 0;
    while (std::getline(lines, line)) CHECK(nlohmann::json::parse(line)["frame"] == n++);
    CHECK(n == 6);
    fs::remove_all(dir);
  }

  TEST_CASE("benchmark rows recount the per-plate predictions") {
    const auto dir = fresh_dir("blpnet_bench_test");
    Rng rng(5);
    std::string manifest;
    const std::vector<std::vector<std::size_t>> plates{{0, 1, 2, 3}, {0, 0, 4, 5}, {1, 2, 3, 0, 4}};
    for (std::size_t i = 0; i < plates.size(); ++i) {
      const auto name = "p" + std::to_string(i) + ".pgm";
      write_pgm(render_plate(plates[i], PlateLayout{}, rng).image, dir / name);
      manifest += name + "\t";
      for (std::size_t k = 0; k < plates[i].size(); ++k) manifest += (k ? " " : "") + std::to_string(plates[i][k]);
      manifest += "\n";
    }
    write_text(dir / "manifest.tsv", manifest);
    const auto fixtures = load_fixtures(dir);
    REQUIRE(fixtures.size() == 3);
    const auto report = benchmark(fixtures, fixed_models());
    CHECK(report.plates.size() == 6);
    for (const auto& row : report.rows) {
      std::size_t hits = 0, total = 0, count = 0;
      for (const auto& p : report.plates) {
        if (p.model != row.model || p.truth.size() != row.chars) continue;
        ++count;
        total += p.truth.size();
        for (std::size_t k = 0; k < std::min(p.truth.size(), p.predicted.size()); ++k) hits += p.truth[k] == p.predicted[k];
      }
      CHECK(row.plates == count);
      CHECK(row.hits == hits);
      CHECK(row.total == total);
      CHECK(row.accuracy == doctest::Approx(100.0 * hits / total));
    }
    CHECK(format_benchmark(report).find("0.0152") != std::string::npos);
    write_text(dir / "manifest.tsv", "p0.pgm\tx y\n");
    CHECK_THROWS_AS(load_fixtures(dir), DataError);
    fs::remove_all(dir);
  }
}
