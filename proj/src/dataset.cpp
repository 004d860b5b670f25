#include "roofkit/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

namespace roofkit::dataset {

void RoofSegmentRecord::validate() const {
  if (height_m <= 0.0) throw InvalidInput("segment height must be positive: " + segment_id);
  if (angle_deg < 0.0 || angle_deg > 90.0)
    throw InvalidInput("segment angle outside [0, 90]: " + segment_id);
  if (azimuth_deg < 0.0 || azimuth_deg >= 360.0)
    throw InvalidInput("segment azimuth outside [0, 360): " + segment_id);
  geo::WorldPolygon copy = polygon;
  copy.validate_and_normalize();
}

AttributeMaps::AttributeMaps(int w, int h) : width(w), height(h) {
  const std::size_t n = static_cast<std::size_t>(w) * h;
  height_m.assign(n, kNoData);
  angle_deg.assign(n, kNoData);
  azimuth_deg.assign(n, kNoData);
}

AttributeMaps derive_attribute_maps(const geo::TileGrid& grid,
                                    std::span<const SegmentInstance> segments) {
  AttributeMaps maps(grid.width, grid.height);
  for (const SegmentInstance& seg : segments) {
    const auto h = static_cast<float>(seg.record.height_m);
    const auto a = static_cast<float>(seg.record.angle_deg);
    const auto az = static_cast<float>(seg.record.azimuth_deg);
    // Mask bits are row-major and contiguous, so the word index maps
    // straight onto the flat map index.
    const auto& words = seg.mask.words();
    for (std::size_t wi = 0; wi < words.size(); ++wi) {
      std::uint64_t word = words[wi];
      while (word != 0) {
        const int bit = std::countr_zero(word);
        word &= word - 1;
        const std::size_t i = (wi << 6) + static_cast<std::size_t>(bit);
        maps.height_m[i] = h;
        maps.angle_deg[i] = a;
        maps.azimuth_deg[i] = az;
      }
    }
  }
  return maps;
}

TileAnnotation build_tile(const std::string& tile_id, geo::Point2 center,
                          std::span<const RoofSegmentRecord> segments, double extent_m, int px) {
  TileAnnotation tile;
  tile.tile_id = tile_id;
  tile.grid.origin_x = center.x - extent_m / 2.0;
  tile.grid.origin_y = center.y - extent_m / 2.0;
  tile.grid.extent = extent_m;
  tile.grid.width = px;
  tile.grid.height = px;
  tile.grid.validate();

  const double min_x = tile.grid.origin_x;
  const double min_y = tile.grid.origin_y;
  for (const RoofSegmentRecord& record : segments) {
    try {
      record.validate();
    } catch (const InvalidInput& e) {
      tile.warnings.push_back(std::string("skipped segment: ") + e.what());
      continue;
    }
    const auto clipped =
        geo::clip_to_rect(record.polygon, min_x, min_y, min_x + extent_m, min_y + extent_m);
    if (!clipped) continue;  // fully outside the tile

    geo::InstanceMask mask = geo::rasterize(*clipped, tile.grid);
    if (mask.empty()) {
      ++tile.dropped_subpixel;
      continue;
    }
    RoofSegmentRecord kept = record;
    kept.polygon = *clipped;
    tile.segments.push_back({std::move(kept), std::move(mask)});
  }

  tile.maps = derive_attribute_maps(tile.grid, tile.segments);
  return tile;
}

std::string to_string(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

Split split_from_string(const std::string& name) {
  if (name == "train") return Split::train;
  if (name == "val") return Split::val;
  if (name == "test") return Split::test;
  throw InvalidInput("unknown split name: " + name);
}

namespace {

struct UnionFind {
  std::vector<int> parent;
  explicit UnionFind(int n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  int find(int x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  }
  void unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
};

}  // namespace

SplitAssignment geographic_split(const std::vector<std::pair<std::string, geo::Point2>>& centroids,
                                 double radius_m, std::array<double, 3> ratios,
                                 std::uint64_t seed) {
  if (centroids.empty()) throw InvalidInput("geographic split needs at least one tile");
  if (radius_m <= 0.0) throw InvalidInput("clustering radius must be positive");
  const double ratio_sum = ratios[0] + ratios[1] + ratios[2];
  if (ratios[0] < 0.0 || ratios[1] < 0.0 || ratios[2] < 0.0 || ratio_sum <= 0.0)
    throw InvalidInput("split ratios must be non-negative with a positive sum");
  for (double& r : ratios) r /= ratio_sum;  // accept proportions like 60/15/15

  const int n = static_cast<int>(centroids.size());
  UnionFind uf(n);

  // Spatial hash with cells of the clustering radius: any pair within the
  // radius shares a cell or sits in adjacent cells.
  std::map<std::pair<std::int64_t, std::int64_t>, std::vector<int>> buckets;
  auto cell_of = [&](const geo::Point2& p) {
    return std::make_pair(static_cast<std::int64_t>(std::floor(p.x / radius_m)),
                          static_cast<std::int64_t>(std::floor(p.y / radius_m)));
  };
  for (int i = 0; i < n; ++i) buckets[cell_of(centroids[i].second)].push_back(i);

  const double radius_sq = radius_m * radius_m;
  for (const auto& [cell, members] : buckets) {
    for (std::int64_t dx = -1; dx <= 1; ++dx) {
      for (std::int64_t dy = -1; dy <= 1; ++dy) {
        const auto it = buckets.find({cell.first + dx, cell.second + dy});
        if (it == buckets.end()) continue;
        for (int i : members) {
          for (int j : it->second) {
            if (j <= i) continue;
            const auto& a = centroids[i].second;
            const auto& b = centroids[j].second;
            const double dxm = a.x - b.x, dym = a.y - b.y;
            if (dxm * dxm + dym * dym <= radius_sq) uf.unite(i, j);
          }
        }
      }
    }
  }

  // Number clusters by first occurrence, gather members.
  std::map<int, int> cluster_id;
  std::vector<std::vector<int>> members;
  for (int i = 0; i < n; ++i) {
    const int root = uf.find(i);
    auto [it, inserted] = cluster_id.try_emplace(root, static_cast<int>(members.size()));
    if (inserted) members.emplace_back();
    members[it->second].push_back(i);
  }

  // Largest clusters first with a seeded shuffle breaking size ties.
  std::vector<int> order(members.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return members[a].size() > members[b].size(); });

  SplitAssignment out;
  std::array<double, 3> target{};
  std::array<double, 3> assigned{};
  for (int s = 0; s < 3; ++s) target[s] = ratios[s] * n;

  // Most relatively under-filled split first, so small splits still get
  // their share early; ties go train, val, test.
  auto relative_deficit = [&](int s) {
    if (target[s] <= 0.0) return -std::numeric_limits<double>::infinity();
    return (target[s] - assigned[s]) / target[s];
  };
  for (int c : order) {
    int best = 0;
    for (int s = 1; s < 3; ++s) {
      if (relative_deficit(s) > relative_deficit(best)) best = s;
    }
    const Split split = static_cast<Split>(best);
    assigned[best] += static_cast<double>(members[c].size());
    out.counts[best] += static_cast<std::int64_t>(members[c].size());
    for (int i : members[c]) {
      out.split_of[centroids[i].first] = split;
      out.cluster_of[centroids[i].first] = c;
    }
  }

  if (members.size() == 1 && n > 1) {
    out.warnings.push_back(
        "all tiles fall in a single geographic cluster; the whole dataset shares one split");
  }
  for (int s = 0; s < 3; ++s) {
    const double achieved = static_cast<double>(out.counts[s]) / n;
    if (ratios[s] > 0.0 && std::abs(achieved - ratios[s]) > 0.10) {
      out.warnings.push_back("split '" + to_string(static_cast<Split>(s)) +
                             "' deviates from its target ratio by more than 10%");
    }
  }
  return out;
}

DatasetStats compute_stats(std::span<const TileAnnotation> train_tiles) {
  if (train_tiles.empty()) throw InvalidInput("statistics need a non-empty train split");

  DatasetStats stats;
  stats.tile_count = static_cast<std::int64_t>(train_tiles.size());
  double log_sum = 0.0, log_sq_sum = 0.0;
  for (const TileAnnotation& tile : train_tiles) {
    for (const SegmentInstance& seg : tile.segments) {
      ++stats.instance_count;
      const double lh = std::log(seg.record.height_m);
      log_sum += lh;
      log_sq_sum += lh * lh;
      stats.height_hist.add(seg.record.height_m);
      stats.angle_hist.add(seg.record.angle_deg);
      stats.azimuth_hist.add(seg.record.azimuth_deg);
    }
  }
  if (stats.instance_count == 0) throw InvalidInput("train split contains no instances");

  const double n = static_cast<double>(stats.instance_count);
  stats.per_image_mean = n / static_cast<double>(stats.tile_count);
  stats.log_height_mu = log_sum / n;
  const double var = std::max(0.0, log_sq_sum / n - stats.log_height_mu * stats.log_height_mu);
  stats.log_height_sigma = std::sqrt(var);
  return stats;
}

FeatureReadResult read_feature_collection(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open feature collection: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput("malformed geojson: " + std::string(e.what()));
  }
  if (j.value("type", "") != "FeatureCollection" || !j.contains("features"))
    throw InvalidInput("input must be a GeoJSON FeatureCollection");

  auto id_to_string = [](const nlohmann::json& v) -> std::string {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_number_integer()) return std::to_string(v.get<std::int64_t>());
    throw InvalidInput("ids must be strings or integers");
  };

  FeatureReadResult out;
  std::size_t index = 0;
  for (const auto& feature : j.at("features")) {
    ++index;
    try {
      RoofSegmentRecord record;
      const auto& props = feature.at("properties");
      record.building_id = id_to_string(props.at("building_id"));
      record.segment_id = props.contains("segment_id")
                              ? id_to_string(props.at("segment_id"))
                              : record.building_id + "_" + std::to_string(index);
      record.height_m = props.at("height_m").get<double>();
      record.angle_deg = props.at("angle_deg").get<double>();
      record.azimuth_deg = props.at("azimuth_deg").get<double>();
      record.polygon = geo::polygon_from_geojson(feature.at("geometry"));
      record.validate();
      out.records.push_back(std::move(record));
    } catch (const std::exception& e) {
      out.warnings.push_back("skipped feature " + std::to_string(index) + ": " + e.what());
    }
  }
  return out;
}

nlohmann::json tile_to_manifest(const TileAnnotation& tile) {
  nlohmann::json segments = nlohmann::json::array();
  for (const SegmentInstance& seg : tile.segments) {
    segments.push_back({{"segment_id", seg.record.segment_id},
                        {"building_id", seg.record.building_id},
                        {"height_m", seg.record.height_m},
                        {"angle_deg", seg.record.angle_deg},
                        {"azimuth_deg", seg.record.azimuth_deg},
                        {"polygon", geo::polygon_to_geojson(seg.record.polygon)},
                        {"mask", geo::rle_to_json(geo::rle_encode(seg.mask))}});
  }
  return nlohmann::json{{"tile_id", tile.tile_id},
                        {"grid",
                         {{"origin", {tile.grid.origin_x, tile.grid.origin_y}},
                          {"extent", tile.grid.extent},
                          {"px", tile.grid.width}}},
                        {"segments", segments},
                        {"dropped_subpixel", tile.dropped_subpixel},
                        {"warnings", tile.warnings}};
}

TileAnnotation tile_from_manifest(const nlohmann::json& j) {
  TileAnnotation tile;
  try {
    tile.tile_id = j.at("tile_id").get<std::string>();
    const auto& grid = j.at("grid");
    tile.grid.origin_x = grid.at("origin").at(0).get<double>();
    tile.grid.origin_y = grid.at("origin").at(1).get<double>();
    tile.grid.extent = grid.at("extent").get<double>();
    tile.grid.width = tile.grid.height = grid.at("px").get<int>();
    tile.grid.validate();
    for (const auto& seg : j.at("segments")) {
      RoofSegmentRecord record;
      record.segment_id = seg.at("segment_id").get<std::string>();
      record.building_id = seg.at("building_id").get<std::string>();
      record.height_m = seg.at("height_m").get<double>();
      record.angle_deg = seg.at("angle_deg").get<double>();
      record.azimuth_deg = seg.at("azimuth_deg").get<double>();
      record.polygon = geo::polygon_from_geojson(seg.at("polygon"));
      geo::InstanceMask mask = geo::rle_decode(geo::rle_from_json(seg.at("mask")));
      if (mask.width() != tile.grid.width || mask.height() != tile.grid.height)
        throw InvalidInput("mask dimensions do not match the tile grid");
      tile.segments.push_back({std::move(record), std::move(mask)});
    }
    tile.dropped_subpixel = j.value("dropped_subpixel", std::int64_t{0});
    if (j.contains("warnings")) tile.warnings = j.at("warnings").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput("malformed tile manifest: " + std::string(e.what()));
  }
  tile.maps = derive_attribute_maps(tile.grid, tile.segments);
  return tile;
}

void write_tile_manifest(const std::filesystem::path& dir, const TileAnnotation& tile) {
  report::write_text_file(dir / ("tile_" + tile.tile_id + ".json"),
                          tile_to_manifest(tile).dump(2) + "\n");
}

std::vector<TileAnnotation> read_tile_dir(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir))
    throw IoError("tile directory does not exist: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.starts_with("tile_") && name.ends_with(".json")) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());

  std::vector<TileAnnotation> tiles;
  for (const auto& file : files) {
    nlohmann::json j;
    std::ifstream in(file);
    if (!in) throw IoError("cannot open tile manifest: " + file.string());
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw InvalidInput("malformed tile manifest " + file.string() + ": " + e.what());
    }
    tiles.push_back(tile_from_manifest(j));
  }
  return tiles;
}

void write_attribute_map_dumps(const std::filesystem::path& dir, const TileAnnotation& tile) {
  struct Entry {
    const char* suffix;
    const std::vector<float>* values;
  };
  const Entry entries[] = {{"height", &tile.maps.height_m},
                           {"angle", &tile.maps.angle_deg},
                           {"azimuth", &tile.maps.azimuth_deg}};
  char buf[32];
  for (const Entry& entry : entries) {
    std::ostringstream out;
    for (int r = 0; r < tile.maps.height; ++r) {
      for (int c = 0; c < tile.maps.width; ++c) {
        std::snprintf(buf, sizeof(buf), "%g", (*entry.values)[tile.maps.index(r, c)]);
        out << (c > 0 ? "," : "") << buf;
      }
      out << '\n';
    }
    report::write_text_file(
        dir / ("tile_" + tile.tile_id + "_" + entry.suffix + ".csv"), out.str());
  }
}

nlohmann::json split_to_json(const SplitAssignment& assignment, double radius_m,
                             std::array<double, 3> ratios, std::uint64_t seed) {
  nlohmann::json splits = nlohmann::json::object();
  nlohmann::json clusters = nlohmann::json::object();
  for (const auto& [tile, split] : assignment.split_of) splits[tile] = to_string(split);
  for (const auto& [tile, cluster] : assignment.cluster_of) clusters[tile] = cluster;
  return nlohmann::json{{"radius_m", radius_m},
                        {"ratios", ratios},
                        {"seed", seed},
                        {"splits", splits},
                        {"clusters", clusters},
                        {"counts",
                         {{"train", assignment.counts[0]},
                          {"val", assignment.counts[1]},
                          {"test", assignment.counts[2]}}},
                        {"warnings", assignment.warnings}};
}

SplitAssignment split_from_json(const nlohmann::json& j) {
  SplitAssignment out;
  try {
    for (const auto& [tile, name] : j.at("splits").items()) {
      const Split split = split_from_string(name.get<std::string>());
      out.split_of[tile] = split;
      ++out.counts[static_cast<int>(split)];
    }
    if (j.contains("clusters")) {
      for (const auto& [tile, cluster] : j.at("clusters").items())
        out.cluster_of[tile] = cluster.get<int>();
    }
    if (j.contains("warnings")) out.warnings = j.at("warnings").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput("malformed splits json: " + std::string(e.what()));
  }
  return out;
}

nlohmann::json stats_to_json(const DatasetStats& stats) {
  return nlohmann::json{{"tile_count", stats.tile_count},
                        {"instance_count", stats.instance_count},
                        {"per_image_mean", stats.per_image_mean},
                        {"log_height_mu", stats.log_height_mu},
                        {"log_height_sigma", stats.log_height_sigma},
                        {"histograms",
                         {{"height", report::histogram_to_json(stats.height_hist)},
                          {"angle", report::histogram_to_json(stats.angle_hist)},
                          {"azimuth", report::histogram_to_json(stats.azimuth_hist)}}}};
}

}  // namespace roofkit::dataset
