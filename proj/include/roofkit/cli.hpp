#pragma once

// Command-line entry point and the pipeline glue wiring the modules into
// the dataset / evaluation / reconstruction workflows.

#include <cstdint>
#include <string>
#include <vector>

#include "roofkit/attr.hpp"
#include "roofkit/dataset.hpp"
#include "roofkit/eval.hpp"
#include "roofkit/lod2.hpp"

#include <nlohmann/json_fwd.hpp>

namespace roofkit::cli {

// Shared run configuration; subcommand-specific paths live on the parsed
// command line only.
struct RunConfig {
  attr::HeightScheme scheme;          // defaults to log-normalized
  attr::LossWeights weights;
  eval::ClusterThresholds clusters;
  double iou_threshold = 0.5;
  eval::IouComparator comparator = eval::IouComparator::greater_equal;
  lod2::AzimuthConvention azimuth_convention = lod2::AzimuthConvention::facing;
  double tile_extent_m = 100.0;
  int tile_px = 1024;
  double split_radius_m = 1000.0;
  std::vector<double> split_ratios = {0.6, 0.15, 0.15};
  std::uint64_t seed = 0;
  int jobs = 1;

  void validate() const;
  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);

  friend bool operator==(const RunConfig&, const RunConfig&);
};

struct EvalSummary {
  eval::ApResult ap;
  eval::MaeResult mae;
  std::vector<eval::ClusterRow> cluster_rows;
  std::vector<eval::AttrPair> matched_pairs;
  std::vector<eval::GtInstance> gt_instances;
  std::int64_t detection_count = 0;
  std::int64_t gt_count = 0;
  std::int64_t matched_count = 0;
};

// Full evaluation protocol over ground-truth tiles and detections grouped
// by image id: AP over all images, optimal matching at the configured
// threshold, attribute MAE and the per-cluster breakdown.
EvalSummary evaluate_detections(const std::vector<dataset::TileAnnotation>& tiles,
                                const std::vector<eval::Detection>& detections,
                                const RunConfig& config);

// CSV of signed per-cluster attribute errors with fixed bin edges.
std::string error_histograms_csv(const std::vector<eval::AttrPair>& pairs,
                                 const eval::ClusterThresholds& thresholds);

// Exit codes: 0 success, 1 validation/usage error, 2 I/O error.
int run(int argc, const char* const* argv);
int run(const std::vector<std::string>& args);  // args without the program name

}  // namespace roofkit::cli
