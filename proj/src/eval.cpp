#include "roofkit/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

namespace roofkit::eval {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::string format_optional(const std::optional<double>& v) {
  if (!v) return "--";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", *v);
  return buf;
}

}  // namespace

std::vector<int> max_score_assignment(const std::vector<std::vector<double>>& score) {
  const int rows = static_cast<int>(score.size());
  const int cols = rows == 0 ? 0 : static_cast<int>(score[0].size());
  for (const auto& row : score) {
    if (static_cast<int>(row.size()) != cols) throw InvalidInput("score matrix is ragged");
  }
  if (rows == 0 || cols == 0) return std::vector<int>(rows, -1);

  // Minimize negated scores on a square matrix padded with zeros
  // (Jonker-Volgenant style shortest augmenting paths with potentials).
  const int n = std::max(rows, cols);
  auto cost = [&](int r, int c) -> double {
    if (r < rows && c < cols) return -score[r][c];
    return 0.0;
  };

  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> col_to_row(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    col_to_row[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, kInf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = col_to_row[j0];
      int j1 = 0;
      double delta = kInf;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[col_to_row[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (col_to_row[j0] != 0);
    do {
      const int j1 = way[j0];
      col_to_row[j0] = col_to_row[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  std::vector<int> row_to_col(rows, -1);
  for (int j = 1; j <= n; ++j) {
    const int r = col_to_row[j] - 1;
    if (r >= 0 && r < rows && j - 1 < cols) row_to_col[r] = j - 1;
  }
  return row_to_col;
}

MatchReport hungarian_match(const std::vector<std::vector<double>>& iou, double threshold,
                            IouComparator cmp) {
  for (const auto& row : iou) {
    for (double v : row) {
      if (!std::isfinite(v) || v < 0.0 || v > 1.0)
        throw InvalidInput("IoU entries must be finite and within [0, 1]");
    }
  }

  MatchReport report;
  const int preds = static_cast<int>(iou.size());
  const int gts = preds == 0 ? 0 : static_cast<int>(iou[0].size());
  const std::vector<int> assignment = max_score_assignment(iou);

  std::vector<char> gt_matched(gts, 0);
  for (int p = 0; p < preds; ++p) {
    const int g = assignment[p];
    if (g >= 0 && iou_passes(iou[p][g], threshold, cmp)) {
      report.pairs.push_back({p, g, iou[p][g]});
      report.total_iou += iou[p][g];
      gt_matched[g] = 1;
    } else {
      report.unmatched_pred.push_back(p);
    }
  }
  for (int g = 0; g < gts; ++g) {
    if (!gt_matched[g]) report.unmatched_gt.push_back(g);
  }
  // assignment is produced row-ascending, so pairs are already (pred, gt) sorted
  return report;
}

namespace {

struct PooledDetection {
  double score = 0.0;
  int image = 0;
  int det = 0;
  bool tp = false;
};

double ap_at_threshold(const std::vector<ImageEval>& images, double threshold, IouComparator cmp,
                       std::int64_t total_gt) {
  std::vector<PooledDetection> pool;
  for (int img = 0; img < static_cast<int>(images.size()); ++img) {
    const ImageEval& image = images[img];
    const int dets = static_cast<int>(image.scores.size());
    std::vector<int> order(dets);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return image.scores[a] > image.scores[b]; });

    std::vector<char> gt_used(image.gt_count, 0);
    for (int d : order) {
      int best_gt = -1;
      double best_iou = -1.0;
      for (int g = 0; g < image.gt_count; ++g) {
        if (gt_used[g]) continue;
        const double v = image.iou[d][g];
        if (iou_passes(v, threshold, cmp) && v > best_iou) {
          best_iou = v;
          best_gt = g;
        }
      }
      bool tp = false;
      if (best_gt >= 0) {
        gt_used[best_gt] = 1;
        tp = true;
      }
      pool.push_back({image.scores[d], img, d, tp});
    }
  }

  // Deterministic global ranking: score desc, then image, then detection.
  std::sort(pool.begin(), pool.end(), [](const PooledDetection& a, const PooledDetection& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.image != b.image) return a.image < b.image;
    return a.det < b.det;
  });

  std::vector<double> precision(pool.size()), recall(pool.size());
  std::int64_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    if (pool[i].tp) ++tp; else ++fp;
    precision[i] = static_cast<double>(tp) / static_cast<double>(tp + fp);
    recall[i] = static_cast<double>(tp) / static_cast<double>(total_gt);
  }

  // Right-side precision envelope, then the 101 interpolation points.
  std::vector<double> envelope(pool.size());
  double running = 0.0;
  for (std::size_t i = pool.size(); i-- > 0;) {
    running = std::max(running, precision[i]);
    envelope[i] = running;
  }
  double ap = 0.0;
  for (int k = 0; k <= 100; ++k) {
    const double r = static_cast<double>(k) / 100.0;
    const auto it = std::lower_bound(recall.begin(), recall.end(), r);
    if (it != recall.end()) ap += envelope[static_cast<std::size_t>(it - recall.begin())];
  }
  return ap / 101.0;
}

}  // namespace

ApResult average_precision(const std::vector<ImageEval>& images, IouComparator cmp) {
  std::int64_t total_gt = 0;
  for (const ImageEval& image : images) {
    if (image.iou.size() != image.scores.size())
      throw InvalidInput("IoU matrix rows must match detection count");
    for (const auto& row : image.iou) {
      if (static_cast<int>(row.size()) != image.gt_count)
        throw InvalidInput("IoU matrix columns must match ground-truth count");
    }
    total_gt += image.gt_count;
  }

  ApResult result;
  result.defined = total_gt > 0;
  if (!result.defined) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    result.ap50 = result.ap75 = result.map = nan;
    result.per_threshold.assign(10, nan);
    return result;
  }

  for (int k = 0; k < 10; ++k) {
    const double threshold = 0.5 + 0.05 * k;
    result.per_threshold.push_back(ap_at_threshold(images, threshold, cmp, total_gt));
  }
  result.ap50 = result.per_threshold[0];
  result.ap75 = result.per_threshold[5];
  result.map =
      std::accumulate(result.per_threshold.begin(), result.per_threshold.end(), 0.0) / 10.0;
  return result;
}

double cyclic_distance(double phi1_deg, double phi2_deg) {
  const double d = std::fmod(std::abs(phi1_deg - phi2_deg), 360.0);
  return d <= 180.0 ? d : 360.0 - d;
}

double signed_azimuth_error(double pred_deg, double gt_deg) {
  double d = std::fmod(pred_deg - gt_deg, 360.0);
  if (d <= -180.0) d += 360.0;
  if (d > 180.0) d -= 360.0;
  return d;
}

MaeResult attribute_mae(std::span<const AttrPair> pairs, double steep_gate_deg) {
  MaeResult out;
  out.pair_count = pairs.size();
  if (pairs.empty()) return out;

  double azimuth_sum = 0.0;
  for (const AttrPair& p : pairs) {
    out.height_m += std::abs(p.pred_height_m - p.gt_height_m);
    out.angle_deg += std::abs(p.pred_angle_deg - p.gt_angle_deg);
    if (p.gt_angle_deg > steep_gate_deg) {
      azimuth_sum += cyclic_distance(p.pred_azimuth_deg, p.gt_azimuth_deg);
      ++out.azimuth_pair_count;
    }
  }
  out.height_m /= static_cast<double>(pairs.size());
  out.angle_deg /= static_cast<double>(pairs.size());
  if (out.azimuth_pair_count > 0)
    out.azimuth_deg = azimuth_sum / static_cast<double>(out.azimuth_pair_count);
  return out;
}

void ClusterThresholds::validate() const {
  if (!(height_low < height_mid && height_mid < height_high))
    throw InvalidInput("cluster height thresholds must be strictly increasing");
  if (angle_steep < 0.0) throw InvalidInput("angle threshold must be non-negative");
}

HeightBand height_band(double height_m, const ClusterThresholds& t) {
  if (height_m <= t.height_low) return HeightBand::low;
  if (height_m <= t.height_mid) return HeightBand::medium;
  if (height_m <= t.height_high) return HeightBand::high;
  return HeightBand::very_high;
}

AngleBand angle_band(double angle_deg, const ClusterThresholds& t) {
  return angle_deg <= t.angle_steep ? AngleBand::flat : AngleBand::steep;
}

std::string to_string(HeightBand band) {
  switch (band) {
    case HeightBand::low: return "low";
    case HeightBand::medium: return "medium";
    case HeightBand::high: return "high";
    case HeightBand::very_high: return "very_high";
  }
  return "?";
}

std::string to_string(AngleBand band) {
  return band == AngleBand::flat ? "flat" : "steep";
}

std::vector<ClusterRow> cluster_report(std::span<const GtInstance> gts,
                                       std::span<const AttrPair> matched_pairs,
                                       const ClusterThresholds& thresholds) {
  thresholds.validate();

  auto index_of = [](HeightBand hb, AngleBand ab) {
    return static_cast<int>(ab) * 4 + static_cast<int>(hb);
  };

  std::vector<ClusterRow> rows(8);
  for (int ab = 0; ab < 2; ++ab) {
    for (int hb = 0; hb < 4; ++hb) {
      rows[ab * 4 + hb].height = static_cast<HeightBand>(hb);
      rows[ab * 4 + hb].angle = static_cast<AngleBand>(ab);
    }
  }

  for (const GtInstance& gt : gts) {
    ClusterRow& row =
        rows[index_of(height_band(gt.height_m, thresholds), angle_band(gt.angle_deg, thresholds))];
    ++row.gt_count;
    if (gt.matched) ++row.matched;
  }

  struct Acc {
    double angle = 0.0, azimuth = 0.0, height = 0.0;
    std::size_t n = 0, az_n = 0;
  };
  std::vector<Acc> acc(8);
  for (const AttrPair& p : matched_pairs) {
    const int idx = index_of(height_band(p.gt_height_m, thresholds),
                             angle_band(p.gt_angle_deg, thresholds));
    Acc& a = acc[idx];
    a.angle += std::abs(p.pred_angle_deg - p.gt_angle_deg);
    a.height += std::abs(p.pred_height_m - p.gt_height_m);
    ++a.n;
    if (p.gt_angle_deg > thresholds.angle_steep) {
      a.azimuth += cyclic_distance(p.pred_azimuth_deg, p.gt_azimuth_deg);
      ++a.az_n;
    }
  }

  for (int i = 0; i < 8; ++i) {
    ClusterRow& row = rows[i];
    if (row.gt_count > 0)
      row.match_rate = static_cast<double>(row.matched) / static_cast<double>(row.gt_count);
    if (acc[i].n > 0) {
      row.angle_mae_deg = acc[i].angle / static_cast<double>(acc[i].n);
      row.height_mae_m = acc[i].height / static_cast<double>(acc[i].n);
    }
    if (acc[i].az_n > 0)
      row.azimuth_mae_deg = acc[i].azimuth / static_cast<double>(acc[i].az_n);
  }
  return rows;
}

std::string clusters_to_csv(std::span<const ClusterRow> rows) {
  std::ostringstream out;
  out << "height_band,angle_band,gt_count,matched,match_rate,angle_mae_deg,"
         "azimuth_mae_deg,height_mae_m\n";
  for (const ClusterRow& row : rows) {
    char rate[32];
    std::snprintf(rate, sizeof(rate), "%.6g", row.match_rate);
    out << to_string(row.height) << ',' << to_string(row.angle) << ',' << row.gt_count << ','
        << row.matched << ',' << rate << ',' << format_optional(row.angle_mae_deg) << ','
        << format_optional(row.azimuth_mae_deg) << ',' << format_optional(row.height_mae_m)
        << '\n';
  }
  return out.str();
}

void Detection::validate() const {
  if (image_id.empty()) throw InvalidInput("detection needs an image_id");
  if (!(score >= 0.0 && score <= 1.0)) throw InvalidInput("detection score outside [0, 1]");
  if (height_m <= 0.0) throw InvalidInput("detection height must be positive");
  if (angle_deg < 0.0 || angle_deg > 90.0) throw InvalidInput("detection angle outside [0, 90]");
  if (azimuth_deg < 0.0 || azimuth_deg >= 360.0)
    throw InvalidInput("detection azimuth outside [0, 360)");
}

std::vector<Detection> read_detections(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open detections file: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput("malformed detections json: " + std::string(e.what()));
  }
  if (!j.is_array()) throw InvalidInput("detections file must contain a json array");

  std::vector<Detection> dets;
  for (const auto& item : j) {
    Detection det;
    try {
      det.image_id = item.at("image_id").get<std::string>();
      det.score = item.at("score").get<double>();
      det.mask = geo::rle_from_json(item.at("mask"));
      det.height_m = item.at("height_m").get<double>();
      det.angle_deg = item.at("angle_deg").get<double>();
      det.azimuth_deg = item.at("azimuth_deg").get<double>();
    } catch (const nlohmann::json::exception& e) {
      throw InvalidInput("malformed detection entry: " + std::string(e.what()));
    }
    det.validate();
    dets.push_back(std::move(det));
  }
  return dets;
}

void write_detections(const std::filesystem::path& path, std::span<const Detection> dets) {
  nlohmann::json arr = nlohmann::json::array();
  for (const Detection& det : dets) {
    arr.push_back({{"image_id", det.image_id},
                   {"score", det.score},
                   {"mask", geo::rle_to_json(det.mask)},
                   {"height_m", det.height_m},
                   {"angle_deg", det.angle_deg},
                   {"azimuth_deg", det.azimuth_deg}});
  }
  std::ofstream out(path);
  if (!out) throw IoError("cannot write detections file: " + path.string());
  out << arr.dump(2) << '\n';
}

}  // namespace roofkit::eval
