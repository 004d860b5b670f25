#include "roofkit/cli.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "roofkit/report.hpp"
#include "roofkit/version.hpp"

namespace roofkit::cli {

namespace {

namespace fs = std::filesystem;

// Bounded worker pool over independent indices; every index writes its own
// slot, so results are position-deterministic regardless of scheduling.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
  const int workers = std::max(1, std::min<int>(jobs, static_cast<int>(n)));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::string comparator_name(eval::IouComparator cmp) {
  return cmp == eval::IouComparator::greater_equal ? "ge" : "gt";
}

eval::IouComparator comparator_from_name(const std::string& name) {
  if (name == "ge") return eval::IouComparator::greater_equal;
  if (name == "gt") return eval::IouComparator::strictly_greater;
  throw InvalidInput("unknown comparator: " + name);
}

}  // namespace

void RunConfig::validate() const {
  scheme.validate();
  weights.validate();
  clusters.validate();
  if (iou_threshold < 0.0 || iou_threshold > 1.0)
    throw InvalidInput("iou threshold outside [0, 1]");
  if (tile_extent_m <= 0.0) throw InvalidInput("tile extent must be positive");
  if (tile_px <= 0) throw InvalidInput("tile pixel size must be positive");
  if (split_radius_m <= 0.0) throw InvalidInput("split radius must be positive");
  if (split_ratios.size() != 3) throw InvalidInput("split ratios need exactly 3 values");
  if (jobs < 1) throw InvalidInput("jobs must be at least 1");
}

nlohmann::json RunConfig::to_json() const {
  return nlohmann::json{
      {"height_scheme", scheme.name()},
      {"divisor", scheme.divisor},
      {"mu", scheme.mu},
      {"sigma", scheme.sigma},
      {"lambda_h", weights.lambda_height},
      {"lambda_a", weights.lambda_angle},
      {"lambda_phi", weights.lambda_azimuth},
      {"alpha_th", weights.angle_gate_deg},
      {"cluster_heights", {clusters.height_low, clusters.height_mid, clusters.height_high}},
      {"cluster_angle", clusters.angle_steep},
      {"iou_threshold", iou_threshold},
      {"comparator", comparator_name(comparator)},
      {"azimuth_convention",
       azimuth_convention == lod2::AzimuthConvention::facing ? "facing" : "ridge"},
      {"tile_extent_m", tile_extent_m},
      {"tile_px", tile_px},
      {"split_radius_m", split_radius_m},
      {"split_ratios", split_ratios},
      {"seed", seed},
      {"jobs", jobs}};
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  RunConfig c;
  try {
    c.scheme = attr::HeightScheme::from_name(j.at("height_scheme").get<std::string>());
    c.scheme.divisor = j.at("divisor").get<double>();
    c.scheme.mu = j.at("mu").get<double>();
    c.scheme.sigma = j.at("sigma").get<double>();
    c.weights.lambda_height = j.at("lambda_h").get<double>();
    c.weights.lambda_angle = j.at("lambda_a").get<double>();
    c.weights.lambda_azimuth = j.at("lambda_phi").get<double>();
    c.weights.angle_gate_deg = j.at("alpha_th").get<double>();
    c.clusters.height_low = j.at("cluster_heights").at(0).get<double>();
    c.clusters.height_mid = j.at("cluster_heights").at(1).get<double>();
    c.clusters.height_high = j.at("cluster_heights").at(2).get<double>();
    c.clusters.angle_steep = j.at("cluster_angle").get<double>();
    c.iou_threshold = j.at("iou_threshold").get<double>();
    c.comparator = comparator_from_name(j.at("comparator").get<std::string>());
    c.azimuth_convention = j.at("azimuth_convention").get<std::string>() == "ridge"
                               ? lod2::AzimuthConvention::ridge
                               : lod2::AzimuthConvention::facing;
    c.tile_extent_m = j.at("tile_extent_m").get<double>();
    c.tile_px = j.at("tile_px").get<int>();
    c.split_radius_m = j.at("split_radius_m").get<double>();
    c.split_ratios = j.at("split_ratios").get<std::vector<double>>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.jobs = j.at("jobs").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput("malformed config json: " + std::string(e.what()));
  }
  return c;
}

bool operator==(const RunConfig& a, const RunConfig& b) {
  return a.to_json() == b.to_json();
}

EvalSummary evaluate_detections(const std::vector<dataset::TileAnnotation>& tiles,
                                const std::vector<eval::Detection>& detections,
                                const RunConfig& config) {
  config.validate();

  std::map<std::string, std::size_t> tile_index;
  for (std::size_t i = 0; i < tiles.size(); ++i) tile_index[tiles[i].tile_id] = i;

  // Detections grouped per tile in file order.
  std::vector<std::vector<const eval::Detection*>> per_tile(tiles.size());
  for (const eval::Detection& det : detections) {
    const auto it = tile_index.find(det.image_id);
    if (it == tile_index.end())
      throw InvalidInput("detection references unknown image_id: " + det.image_id);
    per_tile[it->second].push_back(&det);
  }

  struct TileOutcome {
    eval::ImageEval image;
    std::vector<eval::AttrPair> pairs;
    std::vector<eval::GtInstance> gts;
  };
  std::vector<TileOutcome> outcomes(tiles.size());

  parallel_for(tiles.size(), config.jobs, [&](std::size_t t) {
    const dataset::TileAnnotation& tile = tiles[t];
    const auto& dets = per_tile[t];
    TileOutcome& out = outcomes[t];

    std::vector<geo::InstanceMask> det_masks;
    det_masks.reserve(dets.size());
    for (const eval::Detection* det : dets) {
      geo::InstanceMask mask = geo::rle_decode(det->mask);
      if (mask.width() != tile.grid.width || mask.height() != tile.grid.height)
        throw InvalidInput("detection mask size does not match the tile grid of " + tile.tile_id);
      if (mask.empty()) throw InvalidInput("detection mask is empty for " + tile.tile_id);
      det_masks.push_back(std::move(mask));
    }

    out.image.gt_count = static_cast<int>(tile.segments.size());
    out.image.scores.reserve(dets.size());
    out.image.iou.reserve(dets.size());
    for (std::size_t d = 0; d < dets.size(); ++d) {
      out.image.scores.push_back(dets[d]->score);
      std::vector<double> row(tile.segments.size());
      for (std::size_t g = 0; g < tile.segments.size(); ++g)
        row[g] = geo::mask_iou(det_masks[d], tile.segments[g].mask);
      out.image.iou.push_back(std::move(row));
    }

    const eval::MatchReport report =
        eval::hungarian_match(out.image.iou, config.iou_threshold, config.comparator);

    std::vector<char> matched(tile.segments.size(), 0);
    for (const eval::MatchPair& p : report.pairs) {
      matched[p.gt] = 1;
      const auto& gt = tile.segments[p.gt].record;
      const eval::Detection* det = dets[p.pred];
      out.pairs.push_back({gt.height_m, gt.angle_deg, gt.azimuth_deg, det->height_m,
                           det->angle_deg, det->azimuth_deg, p.iou});
    }
    for (std::size_t g = 0; g < tile.segments.size(); ++g) {
      const auto& gt = tile.segments[g].record;
      out.gts.push_back({gt.height_m, gt.angle_deg, gt.azimuth_deg, matched[g] != 0});
    }
  });

  EvalSummary summary;
  std::vector<eval::ImageEval> images;
  images.reserve(tiles.size());
  for (TileOutcome& out : outcomes) {
    images.push_back(std::move(out.image));
    summary.matched_pairs.insert(summary.matched_pairs.end(), out.pairs.begin(), out.pairs.end());
    summary.gt_instances.insert(summary.gt_instances.end(), out.gts.begin(), out.gts.end());
  }
  summary.ap = eval::average_precision(images, config.comparator);
  summary.mae = eval::attribute_mae(summary.matched_pairs, config.clusters.angle_steep);
  summary.cluster_rows =
      eval::cluster_report(summary.gt_instances, summary.matched_pairs, config.clusters);
  summary.detection_count = static_cast<std::int64_t>(detections.size());
  summary.gt_count = static_cast<std::int64_t>(summary.gt_instances.size());
  summary.matched_count = static_cast<std::int64_t>(summary.matched_pairs.size());
  return summary;
}

std::string error_histograms_csv(const std::vector<eval::AttrPair>& pairs,
                                 const eval::ClusterThresholds& thresholds) {
  // Signed errors, fixed edges: angle 1 deg over [-20, 20], azimuth 5 deg
  // over [-180, 180] (steep ground truth only), height 0.5 m over [-10, 10].
  struct ErrorBins {
    const char* attribute;
    report::Histogram prototype;
  };
  const ErrorBins specs[] = {{"angle", report::Histogram(-20.0, 1.0, 40)},
                             {"azimuth", report::Histogram(-180.0, 5.0, 72)},
                             {"height", report::Histogram(-10.0, 0.5, 40)}};

  std::map<std::pair<int, int>, std::array<report::Histogram, 3>> per_cluster;
  for (int ab = 0; ab < 2; ++ab) {
    for (int hb = 0; hb < 4; ++hb) {
      per_cluster[{ab, hb}] = {specs[0].prototype, specs[1].prototype, specs[2].prototype};
    }
  }
  for (const eval::AttrPair& p : pairs) {
    const int hb = static_cast<int>(eval::height_band(p.gt_height_m, thresholds));
    const int ab = static_cast<int>(eval::angle_band(p.gt_angle_deg, thresholds));
    auto& hists = per_cluster[{ab, hb}];
    hists[0].add(p.pred_angle_deg - p.gt_angle_deg);
    if (p.gt_angle_deg > thresholds.angle_steep)
      hists[1].add(eval::signed_azimuth_error(p.pred_azimuth_deg, p.gt_azimuth_deg));
    hists[2].add(p.pred_height_m - p.gt_height_m);
  }

  std::ostringstream out;
  out << "height_band,angle_band,attribute,bin_start,bin_end,count\n";
  char buf[64];
  for (int ab = 0; ab < 2; ++ab) {
    for (int hb = 0; hb < 4; ++hb) {
      const auto& hists = per_cluster[{ab, hb}];
      for (int s = 0; s < 3; ++s) {
        const report::Histogram& h = hists[s];
        for (int b = 0; b < h.bins; ++b) {
          std::snprintf(buf, sizeof(buf), "%.6g,%.6g", h.lo + b * h.bin_width,
                        h.lo + (b + 1) * h.bin_width);
          out << eval::to_string(static_cast<eval::HeightBand>(hb)) << ','
              << eval::to_string(static_cast<eval::AngleBand>(ab)) << ',' << specs[s].attribute
              << ',' << buf << ',' << h.counts[b] << '\n';
        }
      }
    }
  }
  return out.str();
}

namespace {

// ---- subcommand implementations ----

struct PathArgs {
  std::string input, output, centers, tiles, splits, gt, pred;
};

geo::Point2 tile_center(const dataset::TileAnnotation& tile) {
  return {tile.grid.origin_x + tile.grid.extent / 2.0,
          tile.grid.origin_y + tile.grid.extent / 2.0};
}

int cmd_build_dataset(const RunConfig& config, const PathArgs& paths, bool dump_maps) {
  const dataset::FeatureReadResult features = dataset::read_feature_collection(paths.input);
  for (const std::string& w : features.warnings) std::cerr << "warning: " << w << "\n";
  if (features.records.empty()) throw InvalidInput("no valid roof segments in the input");

  // Tile centers: explicit list when given, else one tile per building at
  // the area-weighted centroid of its segments.
  std::vector<std::pair<std::string, geo::Point2>> centers;
  if (!paths.centers.empty()) {
    nlohmann::json j;
    std::istringstream in(report::read_text_file(paths.centers));
    try {
      in >> j;
      for (const auto& item : j)
        centers.push_back({item.at("tile_id").get<std::string>(),
                           {item.at("x").get<double>(), item.at("y").get<double>()}});
    } catch (const nlohmann::json::exception& e) {
      throw InvalidInput("malformed centers file: " + std::string(e.what()));
    }
  } else {
    std::map<std::string, std::pair<geo::Point2, double>> weighted;  // sum(c*A), sum(A)
    for (const auto& record : features.records) {
      const double area = record.polygon.area();
      const geo::Point2 c = record.polygon.centroid();
      auto& [acc, total] = weighted[record.building_id];
      acc.x += c.x * area;
      acc.y += c.y * area;
      total += area;
    }
    for (const auto& [building, acc] : weighted)
      centers.push_back({building, {acc.first.x / acc.second, acc.first.y / acc.second}});
  }
  std::sort(centers.begin(), centers.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });

  fs::create_directories(paths.output);
  std::vector<dataset::TileAnnotation> tiles(centers.size());
  parallel_for(centers.size(), config.jobs, [&](std::size_t i) {
    // Cheap bbox prefilter against the tile rectangle.
    const double half = config.tile_extent_m / 2.0;
    const auto& [tile_id, center] = centers[i];
    std::vector<dataset::RoofSegmentRecord> nearby;
    for (const auto& record : features.records) {
      const auto b = record.polygon.bounds();
      if (b.max_x < center.x - half || b.min_x > center.x + half || b.max_y < center.y - half ||
          b.min_y > center.y + half)
        continue;
      nearby.push_back(record);
    }
    tiles[i] = dataset::build_tile(tile_id, center, nearby, config.tile_extent_m, config.tile_px);
  });

  std::int64_t instances = 0, dropped = 0, warnings = 0;
  for (const auto& tile : tiles) {
    dataset::write_tile_manifest(paths.output, tile);
    if (dump_maps) dataset::write_attribute_map_dumps(paths.output, tile);
    instances += static_cast<std::int64_t>(tile.segments.size());
    dropped += tile.dropped_subpixel;
    warnings += static_cast<std::int64_t>(tile.warnings.size());
    for (const std::string& w : tile.warnings)
      std::cerr << "warning: tile " << tile.tile_id << ": " << w << "\n";
  }
  std::cout << "built " << tiles.size() << " tiles, " << instances << " instances ("
            << dropped << " dropped below one pixel, " << warnings << " segments skipped)\n";
  return 0;
}

int cmd_split(const RunConfig& config, const PathArgs& paths) {
  const auto tiles = dataset::read_tile_dir(paths.tiles);
  if (tiles.empty()) throw InvalidInput("no tile manifests found in " + paths.tiles);

  std::vector<std::pair<std::string, geo::Point2>> centroids;
  for (const auto& tile : tiles) centroids.push_back({tile.tile_id, tile_center(tile)});

  const std::array<double, 3> ratios = {config.split_ratios[0], config.split_ratios[1],
                                        config.split_ratios[2]};
  const dataset::SplitAssignment split =
      dataset::geographic_split(centroids, config.split_radius_m, ratios, config.seed);
  for (const std::string& w : split.warnings) std::cerr << "warning: " << w << "\n";

  report::write_text_file(
      paths.output,
      dataset::split_to_json(split, config.split_radius_m, ratios, config.seed).dump(2) + "\n");
  std::cout << "split " << centroids.size() << " tiles: train " << split.counts[0] << ", val "
            << split.counts[1] << ", test " << split.counts[2] << "\n";
  return 0;
}

int cmd_stats(const RunConfig& config, const PathArgs& paths) {
  auto tiles = dataset::read_tile_dir(paths.tiles);
  if (!paths.splits.empty()) {
    nlohmann::json j;
    std::istringstream in(report::read_text_file(paths.splits));
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw InvalidInput("malformed splits json: " + std::string(e.what()));
    }
    const dataset::SplitAssignment split = dataset::split_from_json(j);
    std::erase_if(tiles, [&](const dataset::TileAnnotation& tile) {
      const auto it = split.split_of.find(tile.tile_id);
      return it == split.split_of.end() || it->second != dataset::Split::train;
    });
  } else {
    std::cerr << "note: no splits file given, computing statistics over every tile\n";
  }

  const dataset::DatasetStats stats = dataset::compute_stats(tiles);
  fs::create_directories(paths.output);

  nlohmann::json out = dataset::stats_to_json(stats);
  std::vector<fs::path> inputs;
  if (!paths.splits.empty()) inputs.push_back(paths.splits);
  out["provenance"] = report::provenance(config.to_json(), inputs);
  report::write_text_file(fs::path(paths.output) / "stats.json", out.dump(2) + "\n");

  report::write_text_file(fs::path(paths.output) / "hist_height.csv",
                          report::histogram_csv(stats.height_hist, "count"));
  report::write_text_file(fs::path(paths.output) / "hist_angle.csv",
                          report::histogram_csv(stats.angle_hist, "count"));
  report::write_text_file(fs::path(paths.output) / "hist_azimuth.csv",
                          report::histogram_csv(stats.azimuth_hist, "count"));
  report::write_text_file(fs::path(paths.output) / "hist_height.svg",
                          report::histogram_svg(stats.height_hist, "Height distribution",
                                                "height [m]"));
  report::write_text_file(fs::path(paths.output) / "hist_angle.svg",
                          report::histogram_svg(stats.angle_hist, "Roof angle distribution",
                                                "angle [deg]"));
  report::write_text_file(fs::path(paths.output) / "hist_azimuth.svg",
                          report::histogram_svg(stats.azimuth_hist, "Azimuth distribution",
                                                "azimuth [deg]"));

  std::cout << "stats over " << stats.tile_count << " tiles, " << stats.instance_count
            << " instances: log-height mu " << stats.log_height_mu << ", sigma "
            << stats.log_height_sigma << "\n";
  return 0;
}

nlohmann::json optional_to_json(const std::optional<double>& v) {
  if (!v) return nullptr;
  return *v;
}

int cmd_eval(const RunConfig& config, const PathArgs& paths) {
  const auto tiles = dataset::read_tile_dir(paths.gt);
  if (tiles.empty()) throw InvalidInput("no tile manifests found in " + paths.gt);
  const auto detections = eval::read_detections(paths.pred);

  const EvalSummary summary = evaluate_detections(tiles, detections, config);

  fs::create_directories(paths.output);
  nlohmann::json metrics = {
      {"ap_defined", summary.ap.defined},
      {"ap50", summary.ap.ap50},
      {"ap75", summary.ap.ap75},
      {"map", summary.ap.map},
      {"ap_per_threshold", summary.ap.per_threshold},
      {"height_mae_m", summary.mae.height_m},
      {"angle_mae_deg", summary.mae.angle_deg},
      {"azimuth_mae_deg", optional_to_json(summary.mae.azimuth_deg)},
      {"counts",
       {{"detections", summary.detection_count},
        {"ground_truth", summary.gt_count},
        {"matched", summary.matched_count},
        {"azimuth_pairs", static_cast<std::int64_t>(summary.mae.azimuth_pair_count)}}},
      {"iou_threshold", config.iou_threshold},
      {"comparator", comparator_name(config.comparator)},
      {"provenance", report::provenance(config.to_json(), {paths.pred})}};
  report::write_text_file(fs::path(paths.output) / "metrics.json", metrics.dump(2) + "\n");
  report::write_text_file(fs::path(paths.output) / "clusters.csv",
                          eval::clusters_to_csv(summary.cluster_rows));
  report::write_text_file(fs::path(paths.output) / "errors_hist.csv",
                          error_histograms_csv(summary.matched_pairs, config.clusters));

  std::cout << "evaluated " << summary.detection_count << " detections against "
            << summary.gt_count << " ground-truth segments: ";
  if (summary.ap.defined) {
    std::cout << "mAP " << summary.ap.map << ", AP50 " << summary.ap.ap50;
  } else {
    std::cout << "AP undefined (no ground truth)";
  }
  std::cout << ", matched " << summary.matched_count << "\n";
  return 0;
}

int cmd_loss_check(const RunConfig& config, int points, double eps) {
  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> component(-2.0, 2.0);
  std::uniform_real_distribution<double> angle360(0.0, 360.0);
  std::uniform_real_distribution<double> angle90(0.0, 90.0);
  std::uniform_real_distribution<double> height(1.0, 80.0);
  std::uniform_real_distribution<double> encoded(-1.5, 1.5);

  double worst = 0.0;
  for (int k = 0; k < points; ++k) {
    attr::AzimuthVector v{component(rng), component(rng)};
    if (v.norm() < 0.2) v.c += 1.0;
    const double target_phi = angle360(rng);
    const attr::AzimuthLoss az = attr::azimuth_loss(v, target_phi);
    const std::vector<double> az_in = {v.c, v.s};
    const std::vector<double> az_grad = {az.d_c, az.d_s};
    worst = std::max(worst, attr::finite_diff_check(
                                [&](std::span<const double> x) {
                                  return attr::azimuth_loss({x[0], x[1]}, target_phi).value;
                                },
                                az_in, az_grad, eps));

    double gt_angle = angle90(rng);
    if (std::abs(gt_angle - config.weights.angle_gate_deg) < 1.0) gt_angle += 2.0;
    const attr::AttrTarget target{height(rng), std::min(gt_angle, 90.0), angle360(rng)};
    const attr::AttrPrediction pred{encoded(rng), angle90(rng), v};
    const attr::AttrLossTerms terms = attr::attr_loss(pred, target, config.weights, config.scheme);
    const std::vector<double> in = {pred.height_enc, pred.angle_deg, v.c, v.s};
    const std::vector<double> grad = {terms.d_height, terms.d_angle, terms.d_azimuth_c,
                                      terms.d_azimuth_s};
    worst = std::max(worst, attr::finite_diff_check(
                                [&](std::span<const double> x) {
                                  return attr::attr_loss({x[0], x[1], {x[2], x[3]}}, target,
                                                         config.weights, config.scheme)
                                      .total;
                                },
                                in, grad, eps));
  }

  std::printf("max relative gradient discrepancy: %.3e (%d points, eps %.0e)\n", worst, points,
              eps);
  return worst < 1e-5 ? 0 : 1;
}

int cmd_reconstruct(const RunConfig& config, const PathArgs& paths, double ground_z) {
  if (paths.gt.empty() && paths.pred.empty())
    throw InvalidInput("reconstruct needs --pred detections and/or --gt tile manifests");

  std::vector<lod2::BuildingMesh> meshes;
  std::int64_t skipped = 0;

  auto add_mesh = [&](const geo::InstanceMask& mask, const geo::TileGrid& grid, double height,
                      double angle, double azimuth, const std::string& name) {
    if (angle >= 90.0) {
      std::cerr << "warning: skipping degenerate vertical segment " << name << "\n";
      ++skipped;
      return;
    }
    const lod2::RoofPlane plane =
        lod2::plane_from_attributes(lod2::mask_centroid_world(mask, grid), height, angle, azimuth,
                                    config.azimuth_convention);
    lod2::BuildingMesh mesh = lod2::extrude_segment(mask, plane, grid, ground_z);
    mesh.name = name;
    meshes.push_back(std::move(mesh));
  };

  std::map<std::string, geo::TileGrid> grids;
  if (!paths.gt.empty()) {
    for (const auto& tile : dataset::read_tile_dir(paths.gt)) {
      grids[tile.tile_id] = tile.grid;
      if (paths.pred.empty()) {
        for (const auto& seg : tile.segments)
          add_mesh(seg.mask, tile.grid, seg.record.height_m, seg.record.angle_deg,
                   seg.record.azimuth_deg, "segment_" + tile.tile_id + "_" + seg.record.segment_id);
      }
    }
    if (grids.empty()) throw InvalidInput("no tile manifests found in " + paths.gt);
  }

  if (!paths.pred.empty()) {
    const auto detections = eval::read_detections(paths.pred);
    std::map<std::string, int> counter;
    for (const auto& det : detections) {
      geo::TileGrid grid;
      if (!grids.empty()) {
        const auto it = grids.find(det.image_id);
        if (it == grids.end())
          throw InvalidInput("detection references unknown image_id: " + det.image_id);
        grid = it->second;
      } else {
        // Without manifests all detections must share one synthetic grid.
        grid.origin_x = 0.0;
        grid.origin_y = 0.0;
        grid.extent = config.tile_extent_m;
        grid.width = grid.height = config.tile_px;
        if (det.mask.width != grid.width || det.mask.height != grid.height)
          throw InvalidInput("detection mask size does not match --px");
      }
      const int index = counter[det.image_id]++;
      add_mesh(geo::rle_decode(det.mask), grid, det.height_m, det.angle_deg, det.azimuth_deg,
               "segment_" + det.image_id + "_" + std::to_string(index));
    }
  }

  lod2::write_obj_file(paths.output, meshes);
  std::cout << "wrote " << meshes.size() << " segment meshes to " << paths.output;
  if (skipped > 0) std::cout << " (" << skipped << " skipped)";
  std::cout << "\n";
  return 0;
}

int cmd_report(const RunConfig& config, const PathArgs& paths) {
  const auto tiles = dataset::read_tile_dir(paths.gt);
  if (tiles.empty()) throw InvalidInput("no tile manifests found in " + paths.gt);

  report::Histogram gt_height = report::Histogram::heights();
  report::Histogram gt_angle = report::Histogram::angles();
  report::Histogram gt_azimuth = report::Histogram::azimuths();
  std::int64_t instances = 0;
  double log_sum = 0.0, log_sq = 0.0;
  for (const auto& tile : tiles) {
    for (const auto& seg : tile.segments) {
      ++instances;
      gt_height.add(seg.record.height_m);
      gt_angle.add(seg.record.angle_deg);
      gt_azimuth.add(seg.record.azimuth_deg);
      const double lh = std::log(seg.record.height_m);
      log_sum += lh;
      log_sq += lh * lh;
    }
  }

  std::optional<report::Histogram> pred_height, pred_angle, pred_azimuth;
  std::int64_t detection_count = 0;
  if (!paths.pred.empty()) {
    pred_height = report::Histogram::heights();
    pred_angle = report::Histogram::angles();
    pred_azimuth = report::Histogram::azimuths();
    for (const auto& det : eval::read_detections(paths.pred)) {
      ++detection_count;
      pred_height->add(det.height_m);
      pred_angle->add(det.angle_deg);
      pred_azimuth->add(det.azimuth_deg);
    }
  }

  fs::create_directories(paths.output);
  auto emit = [&](const char* stem, const report::Histogram& gt,
                  const std::optional<report::Histogram>& pred, const char* title,
                  const char* label) {
    const report::Histogram* overlay = pred ? &*pred : nullptr;
    report::write_text_file(fs::path(paths.output) / (std::string(stem) + ".csv"),
                            report::histogram_csv(gt, "gt", overlay, overlay ? "pred" : ""));
    report::write_text_file(fs::path(paths.output) / (std::string(stem) + ".svg"),
                            report::histogram_svg(gt, title, label, overlay));
  };
  emit("hist_height", gt_height, pred_height, "Height distribution", "height [m]");
  emit("hist_angle", gt_angle, pred_angle, "Roof angle distribution", "angle [deg]");
  emit("hist_azimuth", gt_azimuth, pred_azimuth, "Azimuth distribution", "azimuth [deg]");
  if (instances == 0) std::cerr << "warning: ground truth contains no instances\n";

  nlohmann::json mu = nullptr;
  nlohmann::json sigma = nullptr;
  if (instances > 0) {
    const double mean = log_sum / static_cast<double>(instances);
    mu = mean;
    sigma = std::sqrt(std::max(0.0, log_sq / static_cast<double>(instances) - mean * mean));
  }
  std::vector<fs::path> inputs;
  if (!paths.pred.empty()) inputs.push_back(paths.pred);
  nlohmann::json out = {
      {"tile_count", static_cast<std::int64_t>(tiles.size())},
      {"instance_count", instances},
      {"per_image_mean", static_cast<double>(instances) / static_cast<double>(tiles.size())},
      {"log_height_mu", mu},
      {"log_height_sigma", sigma},
      {"detection_count", detection_count},
      {"provenance", report::provenance(config.to_json(), inputs)}};
  report::write_text_file(fs::path(paths.output) / "report.json", out.dump(2) + "\n");

  std::cout << "report over " << tiles.size() << " tiles, " << instances << " instances\n";
  return 0;
}

}  // namespace

int run(int argc, const char* const* argv) {
  CLI::App app{"roof segment dataset, evaluation and reconstruction toolkit"};
  app.set_version_flag("--version", kVersion);
  app.set_config("--config", "", "TOML config file (command-line flags win)");
  app.require_subcommand(1);

  RunConfig config;
  PathArgs paths;
  std::string scheme_name = config.scheme.name();
  std::vector<double> cluster_heights = {4.5, 7.0, 12.0};
  std::string convention = "facing";
  bool strict_gt = false;
  bool dump_maps = false;
  int points = 100;
  double eps = 1e-5;
  double ground_z = 0.0;

  app.add_option("--seed", config.seed, "seed for every random choice");
  app.add_option("--jobs", config.jobs, "worker pool size")->check(CLI::PositiveNumber);
  app.add_option("--height-scheme", scheme_name, "height target transform")
      ->check(CLI::IsMember({"raw", "linear", "log", "log100", "lognorm"}));
  app.add_option("--divisor", config.scheme.divisor, "linear scheme divisor");
  app.add_option("--mu", config.scheme.mu, "log-normalized mean of training log-heights");
  app.add_option("--sigma", config.scheme.sigma, "log-normalized std of training log-heights");
  app.add_option("--alpha-th", config.weights.angle_gate_deg,
                 "azimuth gate on the ground-truth angle [deg]");
  app.add_option("--lambda-h", config.weights.lambda_height, "height loss weight");
  app.add_option("--lambda-a", config.weights.lambda_angle, "angle loss weight");
  app.add_option("--lambda-phi", config.weights.lambda_azimuth, "azimuth loss weight");
  app.add_option("--cluster-heights", cluster_heights,
                 "height band thresholds [m], strictly increasing")
      ->delimiter(',')
      ->expected(3);
  app.add_option("--cluster-angle", config.clusters.angle_steep,
                 "flat/steep threshold [deg]");

  auto* build = app.add_subcommand("build-dataset", "rasterize roof segments into tiles");
  build->add_option("--input", paths.input, "GeoJSON feature collection")->required();
  build->add_option("--out", paths.output, "output tile directory")->required();
  build->add_option("--extent", config.tile_extent_m, "tile side length [m]");
  build->add_option("--px", config.tile_px, "tile raster size [px]");
  build->add_option("--centers", paths.centers, "optional tile centers json");
  build->add_flag("--dump-maps", dump_maps, "also write per-pixel attribute maps as CSV");

  auto* split = app.add_subcommand("split", "geographically clustered train/val/test split");
  split->add_option("--tiles", paths.tiles, "tile manifest directory")->required();
  split->add_option("--out", paths.output, "output splits.json")->required();
  split->add_option("--radius", config.split_radius_m, "clustering radius [m]");
  split->add_option("--ratios", config.split_ratios, "train,val,test proportions")
      ->delimiter(',')
      ->expected(3);

  auto* stats = app.add_subcommand("stats", "dataset statistics over the train split");
  stats->add_option("--tiles", paths.tiles, "tile manifest directory")->required();
  stats->add_option("--splits", paths.splits, "splits.json (filters to the train split)");
  stats->add_option("--out", paths.output, "output directory")->required();

  auto* evaluate = app.add_subcommand("eval", "match detections and compute metrics");
  evaluate->add_option("--gt", paths.gt, "ground-truth tile directory")->required();
  evaluate->add_option("--pred", paths.pred, "detections json")->required();
  evaluate->add_option("--out", paths.output, "output directory")->required();
  evaluate->add_option("--iou-thresh", config.iou_threshold, "matching IoU threshold");
  evaluate->add_flag("--strict-gt", strict_gt, "require IoU strictly greater than the threshold");

  auto* loss = app.add_subcommand("loss-check", "verify analytic loss gradients");
  loss->add_option("--points", points, "number of random evaluation points")
      ->check(CLI::PositiveNumber);
  loss->add_option("--eps", eps, "central difference step");

  auto* reconstruct = app.add_subcommand("reconstruct", "export LoD2 meshes as OBJ");
  reconstruct->add_option("--pred", paths.pred, "detections json");
  reconstruct->add_option("--gt", paths.gt, "tile manifests (grids and/or reference models)");
  reconstruct->add_option("--out", paths.output, "output OBJ path")->required();
  reconstruct->add_option("--grid-extent", config.tile_extent_m, "tile side length [m]");
  reconstruct->add_option("--px", config.tile_px, "tile raster size [px]");
  reconstruct->add_option("--ground", ground_z, "ground elevation [m]");
  reconstruct->add_option("--azimuth-convention", convention, "stored azimuth meaning")
      ->check(CLI::IsMember({"facing", "ridge"}));

  auto* report_cmd = app.add_subcommand("report", "attribute histograms and summary");
  report_cmd->add_option("--gt", paths.gt, "ground-truth tile directory")->required();
  report_cmd->add_option("--pred", paths.pred, "optional detections json for overlays");
  report_cmd->add_option("--out", paths.output, "output directory")->required();

  for (auto* sub : app.get_subcommands({})) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    const double keep_divisor = config.scheme.divisor;
    const double keep_mu = config.scheme.mu;
    const double keep_sigma = config.scheme.sigma;
    config.scheme = attr::HeightScheme::from_name(scheme_name);
    config.scheme.divisor = keep_divisor;
    config.scheme.mu = keep_mu;
    config.scheme.sigma = keep_sigma;
    config.clusters.height_low = cluster_heights[0];
    config.clusters.height_mid = cluster_heights[1];
    config.clusters.height_high = cluster_heights[2];
    config.comparator = strict_gt ? eval::IouComparator::strictly_greater
                                  : eval::IouComparator::greater_equal;
    config.azimuth_convention =
        convention == "ridge" ? lod2::AzimuthConvention::ridge : lod2::AzimuthConvention::facing;
    config.validate();

    if (build->parsed()) return cmd_build_dataset(config, paths, dump_maps);
    if (split->parsed()) return cmd_split(config, paths);
    if (stats->parsed()) return cmd_stats(config, paths);
    if (evaluate->parsed()) return cmd_eval(config, paths);
    if (loss->parsed()) return cmd_loss_check(config, points, eps);
    if (reconstruct->parsed()) return cmd_reconstruct(config, paths, ground_z);
    if (report_cmd->parsed()) return cmd_report(config, paths);
    throw InvalidInput("no subcommand given");
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return 2;
  } catch (const InvalidInput& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

int run(const std::vector<std::string>& args) {
  std::vector<std::string> full = {"roofkit"};
  full.insert(full.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  argv.reserve(full.size());
  for (const std::string& s : full) argv.push_back(s.c_str());
  return run(static_cast<int>(argv.size()), argv.data());
}

}  // namespace roofkit::cli
