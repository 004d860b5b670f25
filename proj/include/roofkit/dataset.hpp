#pragma once

// Ground-truth construction: tiles around building centroids, per-segment
// instance masks plus per-pixel attribute maps, geographically clustered
// splits, and dataset statistics.

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "roofkit/common.hpp"
#include "roofkit/geo.hpp"
#include "roofkit/report.hpp"

#include <nlohmann/json_fwd.hpp>

namespace roofkit::dataset {

struct RoofSegmentRecord {
  std::string segment_id;
  std::string building_id;
  geo::WorldPolygon polygon;
  double height_m = 0.0;
  double angle_deg = 0.0;   // [0, 90]
  double azimuth_deg = 0.0; // [0, 360)

  void validate() const;
};

struct SegmentInstance {
  RoofSegmentRecord record;  // polygon clipped to the tile extent
  geo::InstanceMask mask;
};

inline constexpr float kNoData = -1.0f;  // all real attribute values are >= 0

struct AttributeMaps {
  int width = 0;
  int height = 0;
  std::vector<float> height_m;
  std::vector<float> angle_deg;
  std::vector<float> azimuth_deg;

  AttributeMaps() = default;
  AttributeMaps(int w, int h);
  std::size_t index(int row, int col) const {
    return static_cast<std::size_t>(row) * width + col;
  }
};

struct TileAnnotation {
  std::string tile_id;
  geo::TileGrid grid;
  std::vector<SegmentInstance> segments;
  AttributeMaps maps;
  std::vector<std::string> warnings;   // skipped segments, one note each
  std::int64_t dropped_subpixel = 0;   // segments clipped below one pixel
};

// Per-pixel maps with the last covering segment winning; instance masks
// stay independent and may overlap.
AttributeMaps derive_attribute_maps(const geo::TileGrid& grid,
                                    std::span<const SegmentInstance> segments);

// Square tile centered on `center`. Segments are clipped to the extent,
// rasterized, and dropped when nothing remains; invalid geometry is skipped
// with a warning record.
TileAnnotation build_tile(const std::string& tile_id, geo::Point2 center,
                          std::span<const RoofSegmentRecord> segments, double extent_m = 100.0,
                          int px = 1024);

enum class Split { train, val, test };
std::string to_string(Split split);
Split split_from_string(const std::string& name);

struct SplitAssignment {
  std::map<std::string, Split> split_of;
  std::map<std::string, int> cluster_of;
  std::array<std::int64_t, 3> counts{};  // train, val, test
  std::vector<std::string> warnings;
};

// Transitive single-linkage clustering (union-find over pairs within the
// radius), whole clusters assigned largest-first to the most under-filled
// split with seeded tie-breaking. No cross-split pair within the radius.
SplitAssignment geographic_split(const std::vector<std::pair<std::string, geo::Point2>>& centroids,
                                 double radius_m = 1000.0,
                                 std::array<double, 3> ratios = {0.6, 0.15, 0.15},
                                 std::uint64_t seed = 0);

struct DatasetStats {
  std::int64_t tile_count = 0;
  std::int64_t instance_count = 0;
  double per_image_mean = 0.0;
  double log_height_mu = 0.0;     // natural log, train instances
  double log_height_sigma = 0.0;  // population std
  report::Histogram height_hist = report::Histogram::heights();
  report::Histogram angle_hist = report::Histogram::angles();
  report::Histogram azimuth_hist = report::Histogram::azimuths();
};

// Statistics over the given (train) tiles; errors on an empty split.
DatasetStats compute_stats(std::span<const TileAnnotation> train_tiles);

// -- interchange --

struct FeatureReadResult {
  std::vector<RoofSegmentRecord> records;
  std::vector<std::string> warnings;  // skipped invalid features
};

// GeoJSON-subset FeatureCollection with Polygon geometry and properties
// {building_id, height_m, angle_deg, azimuth_deg[, segment_id]}.
FeatureReadResult read_feature_collection(const std::filesystem::path& path);

nlohmann::json tile_to_manifest(const TileAnnotation& tile);
TileAnnotation tile_from_manifest(const nlohmann::json& j);
void write_tile_manifest(const std::filesystem::path& dir, const TileAnnotation& tile);
// Reads every tile_*.json in the directory, sorted by tile id.
std::vector<TileAnnotation> read_tile_dir(const std::filesystem::path& dir);

// Optional raster dumps: one CSV per attribute map (H rows x W columns,
// -1 for no-data), written as tile_<id>_{height,angle,azimuth}.csv.
void write_attribute_map_dumps(const std::filesystem::path& dir, const TileAnnotation& tile);

nlohmann::json split_to_json(const SplitAssignment& assignment, double radius_m,
                             std::array<double, 3> ratios, std::uint64_t seed);
SplitAssignment split_from_json(const nlohmann::json& j);

nlohmann::json stats_to_json(const DatasetStats& stats);

}  // namespace roofkit::dataset
