#pragma once

// Evaluation protocol: optimal one-to-one matching on mask IoU, COCO-style
// average precision, attribute MAE with cyclic azimuth distance, and the
// per-cluster breakdown by ground-truth height/angle bands.

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "roofkit/common.hpp"
#include "roofkit/geo.hpp"

namespace roofkit::eval {

// The sources disagree on "IoU > 0.5" vs "IoU >= 0.5"; >= is the default
// and the comparator stays configurable.
enum class IouComparator { greater_equal, strictly_greater };

inline bool iou_passes(double iou, double threshold, IouComparator cmp) {
  return cmp == IouComparator::greater_equal ? iou >= threshold : iou > threshold;
}

// Maximizes the total score over one-to-one assignments (rectangular input,
// padded internally). Returns the assigned column per row, -1 if none.
std::vector<int> max_score_assignment(const std::vector<std::vector<double>>& score);

struct MatchPair {
  int pred = -1;
  int gt = -1;
  double iou = 0.0;
};

struct MatchReport {
  std::vector<MatchPair> pairs;  // sorted by (pred, gt)
  std::vector<int> unmatched_pred;
  std::vector<int> unmatched_gt;
  double total_iou = 0.0;  // over kept pairs
};

// Optimal assignment on the IoU matrix; pairs failing the threshold are
// dropped after assignment. Entries must be finite and in [0, 1].
MatchReport hungarian_match(const std::vector<std::vector<double>>& iou, double threshold = 0.5,
                            IouComparator cmp = IouComparator::greater_equal);

// Per-image inputs for AP: detection scores and the det x gt IoU matrix.
struct ImageEval {
  std::vector<double> scores;
  std::vector<std::vector<double>> iou;
  int gt_count = 0;
};

struct ApResult {
  double ap50 = 0.0;
  double ap75 = 0.0;
  double map = 0.0;                   // mean over IoU 0.50:0.05:0.95
  std::vector<double> per_threshold;  // the 10 thresholds in order
  bool defined = false;               // false (NaN values) when there is no ground truth
};

// Score-descending greedy matching per image and threshold, pooled into a
// single PR curve with 101-point interpolation.
ApResult average_precision(const std::vector<ImageEval>& images,
                           IouComparator cmp = IouComparator::greater_equal);

// Shortest angular distance in degrees, in [0, 180].
double cyclic_distance(double phi1_deg, double phi2_deg);

// Signed wrapped difference pred - gt in (-180, 180].
double signed_azimuth_error(double pred_deg, double gt_deg);

// One matched prediction/ground-truth pair with decoded attributes.
struct AttrPair {
  double gt_height_m = 0.0;
  double gt_angle_deg = 0.0;
  double gt_azimuth_deg = 0.0;
  double pred_height_m = 0.0;
  double pred_angle_deg = 0.0;
  double pred_azimuth_deg = 0.0;
  double iou = 0.0;
};

struct MaeResult {
  double height_m = 0.0;
  double angle_deg = 0.0;
  std::optional<double> azimuth_deg;  // absent when no pair has steep ground truth
  std::size_t pair_count = 0;
  std::size_t azimuth_pair_count = 0;
};

// Height/angle MAE over all pairs; azimuth MAE (cyclic) only over pairs
// whose ground-truth angle exceeds the steep gate.
MaeResult attribute_mae(std::span<const AttrPair> pairs, double steep_gate_deg = 15.0);

enum class HeightBand { low, medium, high, very_high };
enum class AngleBand { flat, steep };

struct ClusterThresholds {
  double height_low = 4.5;   // m
  double height_mid = 7.0;   // m
  double height_high = 12.0; // m
  double angle_steep = 15.0; // deg

  void validate() const;  // heights strictly increasing
};

HeightBand height_band(double height_m, const ClusterThresholds& t);
AngleBand angle_band(double angle_deg, const ClusterThresholds& t);
std::string to_string(HeightBand band);
std::string to_string(AngleBand band);

struct GtInstance {
  double height_m = 0.0;
  double angle_deg = 0.0;
  double azimuth_deg = 0.0;
  bool matched = false;
};

struct ClusterRow {
  HeightBand height = HeightBand::low;
  AngleBand angle = AngleBand::flat;
  std::size_t gt_count = 0;
  std::size_t matched = 0;
  double match_rate = 0.0;  // matched / gt_count, 0 for empty clusters
  std::optional<double> angle_mae_deg;
  std::optional<double> azimuth_mae_deg;  // steep clusters only
  std::optional<double> height_mae_m;
};

// All eight clusters in fixed order (flat block then steep block, heights
// ascending); clusters are keyed by ground-truth attributes.
std::vector<ClusterRow> cluster_report(std::span<const GtInstance> gts,
                                       std::span<const AttrPair> matched_pairs,
                                       const ClusterThresholds& thresholds = {});

std::string clusters_to_csv(std::span<const ClusterRow> rows);

// Detection interchange: JSON array of
// {image_id, score, mask:{size,counts}, height_m, angle_deg, azimuth_deg}.
struct Detection {
  std::string image_id;
  double score = 0.0;
  geo::RlePayload mask;
  double height_m = 0.0;
  double angle_deg = 0.0;
  double azimuth_deg = 0.0;

  void validate() const;
};

std::vector<Detection> read_detections(const std::filesystem::path& path);
void write_detections(const std::filesystem::path& path, std::span<const Detection> dets);

}  // namespace roofkit::eval
