#include "roofkit/cli.hpp"

#include <unistd.h>

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "doctest.h"
#include "roofkit/report.hpp"
#include "roofkit/version.hpp"

using namespace roofkit;

namespace {

namespace fs = std::filesystem;

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& stem) {
    path = fs::temp_directory_path() / ("roofkit_" + stem + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

nlohmann::json rect_feature(const std::string& building, double x0, double y0, double x1,
                            double y1, double h, double angle, double azimuth) {
  return {{"type", "Feature"},
          {"geometry",
           {{"type", "Polygon"},
            {"coordinates", {{{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}, {x0, y0}}}}}},
          {"properties",
           {{"building_id", building},
            {"height_m", h},
            {"angle_deg", angle},
            {"azimuth_deg", azimuth}}}};
}

// Three well-separated buildings, each with one flat and one steep segment.
void write_fixture_geojson(const std::string& path) {
  nlohmann::json features = nlohmann::json::array();
  for (int i = 0; i < 3; ++i) {
    const double cx = 8.0 + 100.0 * i;
    const std::string building = "b" + std::to_string(i);
    features.push_back(rect_feature(building, cx - 5.0, 3.0, cx - 1.0, 9.0, 3.5, 5.0, 45.0));
    features.push_back(rect_feature(building, cx + 1.0, 3.0, cx + 5.0, 13.0, 8.0, 40.0, 210.0));
  }
  report::write_text_file(path,
                          nlohmann::json{{"type", "FeatureCollection"}, {"features", features}}
                              .dump(2));
}

void write_self_detections(const std::string& tiles_dir, const std::string& out_path) {
  std::vector<eval::Detection> dets;
  for (const auto& tile : dataset::read_tile_dir(tiles_dir)) {
    for (const auto& seg : tile.segments) {
      eval::Detection det;
      det.image_id = tile.tile_id;
      det.score = 1.0;
      det.mask = geo::rle_encode(seg.mask);
      det.height_m = seg.record.height_m;
      det.angle_deg = seg.record.angle_deg;
      det.azimuth_deg = seg.record.azimuth_deg;
      dets.push_back(std::move(det));
    }
  }
  eval::write_detections(out_path, dets);
}

}  // namespace

TEST_CASE("RunConfig: json round trip reloads to an equal value") {
  cli::RunConfig config;
  config.seed = 99;
  config.iou_threshold = 0.7;
  config.comparator = eval::IouComparator::strictly_greater;
  config.scheme = attr::HeightScheme::from_name("log100");
  config.weights.lambda_angle = 0.01;
  config.clusters.height_mid = 8.0;
  const cli::RunConfig back = cli::RunConfig::from_json(config.to_json());
  CHECK(back == config);
}

TEST_CASE("histogram: fixed bins, wrap boundary, csv row sums") {
  report::Histogram azimuth = report::Histogram::azimuths();
  azimuth.add(359.9);
  CHECK(azimuth.bin_of(359.9) == 71);  // last 5-degree bin
  CHECK(azimuth.counts[71] == 1);

  report::Histogram constant = report::Histogram::heights();
  for (int i = 0; i < 50; ++i) constant.add(6.2);
  int occupied = 0;
  std::int64_t sum = 0;
  for (std::int64_t c : constant.counts) {
    if (c > 0) ++occupied;
    sum += c;
  }
  CHECK(occupied == 1);
  CHECK(sum == constant.total);

  // CSV rows sum to the input count.
  const std::string csv = report::histogram_csv(constant, "count");
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);  // header
  std::int64_t csv_sum = 0;
  while (std::getline(in, line)) {
    const auto pos = line.rfind(',');
    csv_sum += std::stoll(line.substr(pos + 1));
  }
  CHECK(csv_sum == 50);
}

TEST_CASE("histogram svg: overlaid series and empty placeholder") {
  report::Histogram gt = report::Histogram::angles();
  report::Histogram pred = report::Histogram::angles();
  for (int i = 0; i < 10; ++i) {
    gt.add(30.0);
    pred.add(32.0);
  }
  const std::string svg = report::histogram_svg(gt, "t", "x", &pred);
  CHECK(svg.find("<svg") != std::string::npos);
  CHECK(svg.find("#4878b0") != std::string::npos);
  CHECK(svg.find("#e08030") != std::string::npos);

  const report::Histogram empty = report::Histogram::angles();
  const std::string placeholder = report::histogram_svg(empty, "t", "x");
  CHECK(placeholder.find("no data") != std::string::npos);
}

TEST_CASE("evaluate_detections: ground truth against itself is perfect") {
  TempDir tmp("selfeval");
  write_fixture_geojson(tmp / "features.geojson");
  REQUIRE(cli::run({"build-dataset", "--input", tmp / "features.geojson", "--out", tmp / "tiles",
                    "--extent", "16", "--px", "16"}) == 0);
  const auto tiles = dataset::read_tile_dir(tmp / "tiles");
  REQUIRE(tiles.size() == 3);
  for (const auto& tile : tiles) CHECK(tile.segments.size() == 2);

  write_self_detections(tmp / "tiles", tmp / "dets.json");
  const auto dets = eval::read_detections(tmp / "dets.json");

  cli::RunConfig config;
  const cli::EvalSummary summary = cli::evaluate_detections(tiles, dets, config);
  CHECK(summary.ap.defined);
  CHECK(summary.ap.map == doctest::Approx(1.0));
  CHECK(summary.mae.height_m == 0.0);
  CHECK(summary.mae.angle_deg == 0.0);
  REQUIRE(summary.mae.azimuth_deg.has_value());
  CHECK(*summary.mae.azimuth_deg == 0.0);
  CHECK(summary.matched_count == summary.gt_count);
}

TEST_CASE("evaluate_detections: unknown image id is rejected") {
  TempDir tmp("unknown");
  write_fixture_geojson(tmp / "features.geojson");
  REQUIRE(cli::run({"build-dataset", "--input", tmp / "features.geojson", "--out", tmp / "tiles",
                    "--extent", "16", "--px", "16"}) == 0);
  const auto tiles = dataset::read_tile_dir(tmp / "tiles");

  eval::Detection det;
  det.image_id = "nowhere";
  det.score = 0.5;
  geo::InstanceMask mask(16, 16);
  mask.set(0, 0, true);
  det.mask = geo::rle_encode(mask);
  det.height_m = 5.0;
  det.angle_deg = 10.0;
  det.azimuth_deg = 0.0;

  cli::RunConfig config;
  CHECK_THROWS_AS(cli::evaluate_detections(tiles, {det}, config), InvalidInput);
}

TEST_CASE("error_histograms_csv: per-cluster counts match the pairs") {
  std::vector<eval::AttrPair> pairs = {
      {6.0, 40.0, 100.0, 6.5, 42.0, 110.0, 0.9},  // medium steep
      {6.0, 40.0, 100.0, 5.0, 37.0, 95.0, 0.8},   // medium steep
      {2.0, 5.0, 0.0, 2.5, 6.0, 180.0, 0.7},      // low flat (no azimuth row counts)
  };
  const std::string csv = cli::error_histograms_csv(pairs, {});

  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  std::map<std::string, std::int64_t> sums;
  while (std::getline(in, line)) {
    std::istringstream row(line);
    std::string hb, ab, attribute, lo, hi, count;
    std::getline(row, hb, ',');
    std::getline(row, ab, ',');
    std::getline(row, attribute, ',');
    std::getline(row, lo, ',');
    std::getline(row, hi, ',');
    std::getline(row, count, ',');
    sums[hb + "/" + ab + "/" + attribute] += std::stoll(count);
  }
  CHECK(sums["medium/steep/angle"] == 2);
  CHECK(sums["medium/steep/azimuth"] == 2);
  CHECK(sums["medium/steep/height"] == 2);
  CHECK(sums["low/flat/angle"] == 1);
  CHECK(sums["low/flat/azimuth"] == 0);  // flat ground truth carries no azimuth
  CHECK(sums["low/flat/height"] == 1);
}

TEST_CASE("cli: full pipeline with byte-identical reruns") {
  TempDir tmp("pipeline");
  write_fixture_geojson(tmp / "features.geojson");
  const std::uint64_t features_hash = report::fnv1a_file(tmp / "features.geojson");
  REQUIRE(cli::run({"build-dataset", "--input", tmp / "features.geojson", "--out", tmp / "tiles",
                    "--extent", "16", "--px", "16"}) == 0);
  write_self_detections(tmp / "tiles", tmp / "dets.json");
  const std::uint64_t dets_hash = report::fnv1a_file(tmp / "dets.json");

  REQUIRE(cli::run({"split", "--tiles", tmp / "tiles", "--out", tmp / "splits.json", "--radius",
                    "50", "--ratios", "0.6,0.2,0.2", "--seed", "3"}) == 0);
  const auto splits = nlohmann::json::parse(report::read_text_file(tmp / "splits.json"));
  CHECK(splits.at("splits").size() == 3);

  REQUIRE(cli::run({"stats", "--tiles", tmp / "tiles", "--out", tmp / "stats"}) == 0);
  const auto stats = nlohmann::json::parse(report::read_text_file(tmp / "stats/stats.json"));
  CHECK(stats.at("instance_count").get<int>() == 6);
  CHECK(stats.at("per_image_mean").get<double>() == doctest::Approx(2.0));

  // eval twice: identical config must give byte-identical artifacts.
  REQUIRE(cli::run({"eval", "--gt", tmp / "tiles", "--pred", tmp / "dets.json", "--out",
                    tmp / "eval1"}) == 0);
  REQUIRE(cli::run({"eval", "--gt", tmp / "tiles", "--pred", tmp / "dets.json", "--out",
                    tmp / "eval2"}) == 0);
  CHECK(report::read_text_file(tmp / "eval1/metrics.json") ==
        report::read_text_file(tmp / "eval2/metrics.json"));
  CHECK(report::read_text_file(tmp / "eval1/clusters.csv") ==
        report::read_text_file(tmp / "eval2/clusters.csv"));
  CHECK(report::read_text_file(tmp / "eval1/errors_hist.csv") ==
        report::read_text_file(tmp / "eval2/errors_hist.csv"));

  const auto metrics = nlohmann::json::parse(report::read_text_file(tmp / "eval1/metrics.json"));
  CHECK(metrics.at("map").get<double>() == doctest::Approx(1.0));
  CHECK(metrics.at("height_mae_m").get<double>() == 0.0);
  CHECK(metrics.at("counts").at("matched").get<int>() == 6);
  CHECK(metrics.at("provenance").at("version").get<std::string>() == std::string(kVersion));

  // report twice, byte-identical, with prediction overlays.
  REQUIRE(cli::run({"report", "--gt", tmp / "tiles", "--pred", tmp / "dets.json", "--out",
                    tmp / "rep1"}) == 0);
  REQUIRE(cli::run({"report", "--gt", tmp / "tiles", "--pred", tmp / "dets.json", "--out",
                    tmp / "rep2"}) == 0);
  for (const char* name : {"report.json", "hist_height.csv", "hist_angle.csv",
                           "hist_azimuth.csv", "hist_height.svg"}) {
    CHECK(report::read_text_file(tmp.path / "rep1" / name) ==
          report::read_text_file(tmp.path / "rep2" / name));
  }
  const auto rep = nlohmann::json::parse(report::read_text_file(tmp / "rep1/report.json"));
  CHECK(rep.at("instance_count").get<int>() == 6);
  CHECK(rep.at("detection_count").get<int>() == 6);

  // reconstruct reference models from the ground truth.
  REQUIRE(cli::run({"reconstruct", "--gt", tmp / "tiles", "--out", tmp / "model.obj"}) == 0);
  std::ifstream obj(tmp / "model.obj");
  REQUIRE(obj.good());
  const lod2::ParsedObj parsed = lod2::read_obj(obj);
  CHECK(parsed.objects.size() == 6);
  CHECK(parsed.triangle_count > 0);

  // No subcommand mutated its inputs.
  CHECK(report::fnv1a_file(tmp / "features.geojson") == features_hash);
  CHECK(report::fnv1a_file(tmp / "dets.json") == dets_hash);
}

TEST_CASE("cli: report histogram bins match hand counts on the 3-tile fixture") {
  TempDir tmp("handcount");
  write_fixture_geojson(tmp / "features.geojson");
  REQUIRE(cli::run({"build-dataset", "--input", tmp / "features.geojson", "--out", tmp / "tiles",
                    "--extent", "16", "--px", "16"}) == 0);
  REQUIRE(cli::run({"report", "--gt", tmp / "tiles", "--out", tmp / "rep"}) == 0);

  // Fixture: 3 tiles, each one segment at h=3.5 (bin [3,4)) and one at
  // h=8 (bin [8,9)); angles 5 and 40; azimuths 45 and 210.
  auto bin_count = [&](const std::string& file, double bin_start) {
    std::istringstream in(report::read_text_file(tmp.path / "rep" / file));
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      std::istringstream row(line);
      std::string start, end, count;
      std::getline(row, start, ',');
      std::getline(row, end, ',');
      std::getline(row, count, ',');
      if (std::stod(start) == bin_start) return std::stoll(count);
    }
    return -1ll;
  };
  CHECK(bin_count("hist_height.csv", 3.0) == 3);
  CHECK(bin_count("hist_height.csv", 8.0) == 3);
  CHECK(bin_count("hist_height.csv", 50.0) == 0);
  CHECK(bin_count("hist_angle.csv", 5.0) == 3);
  CHECK(bin_count("hist_angle.csv", 40.0) == 3);
  CHECK(bin_count("hist_azimuth.csv", 45.0) == 3);
  CHECK(bin_count("hist_azimuth.csv", 210.0) == 3);
}

TEST_CASE("cli: build-dataset --dump-maps writes per-pixel rasters") {
  TempDir tmp("dumpmaps");
  write_fixture_geojson(tmp / "features.geojson");
  REQUIRE(cli::run({"build-dataset", "--input", tmp / "features.geojson", "--out", tmp / "tiles",
                    "--extent", "16", "--px", "16", "--dump-maps"}) == 0);
  const std::string csv = report::read_text_file(tmp.path / "tiles" / "tile_b0_height.csv");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 16);  // one row per pixel row
  CHECK(csv.find("3.5") != std::string::npos);
  CHECK(csv.find("-1") != std::string::npos);  // no-data sentinel
}

TEST_CASE("cli: stats respects the train split filter") {
  TempDir tmp("statsfilter");
  write_fixture_geojson(tmp / "features.geojson");
  REQUIRE(cli::run({"build-dataset", "--input", tmp / "features.geojson", "--out", tmp / "tiles",
                    "--extent", "16", "--px", "16"}) == 0);
  REQUIRE(cli::run({"split", "--tiles", tmp / "tiles", "--out", tmp / "splits.json", "--radius",
                    "50", "--seed", "1"}) == 0);
  REQUIRE(cli::run({"stats", "--tiles", tmp / "tiles", "--splits", tmp / "splits.json", "--out",
                    tmp / "stats"}) == 0);
  const auto stats = nlohmann::json::parse(report::read_text_file(tmp / "stats/stats.json"));
  const auto splits = nlohmann::json::parse(report::read_text_file(tmp / "splits.json"));
  const int train_tiles = splits.at("counts").at("train").get<int>();
  CHECK(stats.at("tile_count").get<int>() == train_tiles);
}

TEST_CASE("cli: eval with no ground truth reports AP as null with a flag") {
  TempDir tmp("nogt");
  // A tile with zero segments plus one detection on it.
  const dataset::TileAnnotation empty_tile = dataset::build_tile("e0", {8.0, 8.0}, {}, 16.0, 16);
  dataset::write_tile_manifest(tmp.path, empty_tile);

  std::vector<eval::Detection> dets(1);
  geo::InstanceMask mask(16, 16);
  mask.set(3, 3, true);
  dets[0] = {"e0", 0.8, geo::rle_encode(mask), 5.0, 10.0, 0.0};
  eval::write_detections(tmp / "dets.json", dets);

  REQUIRE(cli::run({"eval", "--gt", tmp.path.string(), "--pred", tmp / "dets.json", "--out",
                    tmp / "out"}) == 0);
  const auto metrics = nlohmann::json::parse(report::read_text_file(tmp / "out/metrics.json"));
  CHECK(metrics.at("ap_defined").get<bool>() == false);
  CHECK(metrics.at("map").is_null());  // NaN serializes as null
  CHECK(metrics.at("counts").at("matched").get<int>() == 0);
}

TEST_CASE("cli: loss-check passes at the documented tolerance") {
  CHECK(cli::run({"loss-check", "--seed", "7"}) == 0);
  CHECK(cli::run({"loss-check", "--seed", "7", "--points", "25"}) == 0);
}

TEST_CASE("cli: exit codes for usage, validation and i/o errors") {
  CHECK(cli::run({"--no-such-flag"}) == 1);
  CHECK(cli::run({"eval", "--gt", "/definitely/missing", "--pred", "/also/missing", "--out",
                  "/tmp/roofkit_unused"}) == 2);
  TempDir tmp("badcfg");
  write_fixture_geojson(tmp / "features.geojson");
  CHECK(cli::run({"build-dataset", "--input", tmp / "features.geojson", "--out", tmp / "tiles",
                  "--extent", "-5"}) == 1);
  CHECK(cli::run({"--version"}) == 0);
}

TEST_CASE("cli: config file values are overridden by flags") {
  TempDir tmp("config");
  report::write_text_file(tmp / "run.toml", "seed = 11\nlambda-h = 0.25\n");
  write_fixture_geojson(tmp / "features.geojson");
  // The config file parses and the run goes through; the flag overrides the
  // file for the seed.
  REQUIRE(cli::run({"--config", tmp / "run.toml", "--seed", "5", "build-dataset", "--input",
                    tmp / "features.geojson", "--out", tmp / "tiles", "--extent", "16", "--px",
                    "16"}) == 0);
  CHECK(dataset::read_tile_dir(tmp / "tiles").size() == 3);
}

TEST_CASE("cli: reconstruct from detections with a synthetic grid") {
  TempDir tmp("recon");
  std::vector<eval::Detection> dets(1);
  geo::InstanceMask mask(16, 16);
  for (int r = 4; r < 10; ++r)
    for (int c = 5; c < 12; ++c) mask.set(r, c, true);
  dets[0].image_id = "only";
  dets[0].score = 0.9;
  dets[0].mask = geo::rle_encode(mask);
  dets[0].height_m = 7.5;
  dets[0].angle_deg = 30.0;
  dets[0].azimuth_deg = 125.0;
  eval::write_detections(tmp / "dets.json", dets);

  REQUIRE(cli::run({"reconstruct", "--pred", tmp / "dets.json", "--out", tmp / "model.obj",
                    "--grid-extent", "16", "--px", "16"}) == 0);
  std::ifstream obj(tmp / "model.obj");
  const lod2::ParsedObj parsed = lod2::read_obj(obj);
  REQUIRE(parsed.objects.size() == 1);
  CHECK(parsed.objects[0] == "segment_only_0");

  // Mask size disagreeing with --px is a validation error.
  CHECK(cli::run({"reconstruct", "--pred", tmp / "dets.json", "--out", tmp / "model2.obj",
                  "--grid-extent", "32", "--px", "32"}) == 1);
}
