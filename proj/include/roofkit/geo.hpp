#pragma once

// Planar geometry and raster primitives: polygons in meter coordinates,
// tile grids, bit-packed instance masks, RLE serialization, IoU.

#include <cstdint>
#include <optional>
#include <vector>

#include "roofkit/common.hpp"

#include <nlohmann/json_fwd.hpp>

namespace roofkit::geo {

struct Point2 {
  double x = 0.0;  // meters east
  double y = 0.0;  // meters north

  friend bool operator==(const Point2&, const Point2&) = default;
};

using Ring = std::vector<Point2>;

// Signed area, positive for counter-clockwise rings.
double ring_signed_area(const Ring& ring);

// Closed polygon in a planar meter CRS. Exterior counter-clockwise,
// holes clockwise, no self-intersections. Rings are stored without a
// repeated closing vertex.
struct WorldPolygon {
  Ring exterior;
  std::vector<Ring> holes;

  // Throws InvalidInput on rings with < 3 distinct vertices or zero area.
  // Flips ring orientation in place where it does not match the convention.
  void validate_and_normalize();

  double area() const;       // exterior minus holes
  double perimeter() const;  // exterior ring only
  Point2 centroid() const;   // area-weighted, holes subtract

  struct Bounds {
    double min_x, min_y, max_x, max_y;
  };
  Bounds bounds() const;

  static WorldPolygon rectangle(double min_x, double min_y, double max_x, double max_y);
};

enum class RingSide { inside, boundary, outside };

// Winding-number point location with exact boundary detection.
RingSide point_vs_ring(const Point2& p, const Ring& ring);

// Membership under the fixed tie rule: a point on the exterior edge counts
// as inside, a point on a hole edge stays inside (holes subtract only their
// strict interior).
bool polygon_covers(const WorldPolygon& poly, const Point2& p);

// Square pixel grid over a square world extent. Row 0 is the northernmost
// row, column 0 the westernmost; origin is the south-west corner.
struct TileGrid {
  double origin_x = 0.0;  // m
  double origin_y = 0.0;  // m
  double extent = 0.0;    // side length, m
  int width = 0;          // px
  int height = 0;         // px

  void validate() const;  // extent > 0, width == height > 0

  double meters_per_pixel() const { return extent / static_cast<double>(width); }
  Point2 pixel_center(int row, int col) const;
  // World position of the pixel-corner lattice point (cx in [0,width], cy in [0,height]).
  Point2 corner(int cx, int cy) const;

  friend bool operator==(const TileGrid&, const TileGrid&) = default;
};

// W x H binary raster, bit-packed row-major. Bits outside [0, w*h) stay zero.
class InstanceMask {
 public:
  InstanceMask() = default;
  InstanceMask(int width, int height);

  int width() const { return width_; }
  int height() const { return height_; }
  std::int64_t area_px() const { return area_; }
  bool empty() const { return area_ == 0; }

  bool test(int row, int col) const;
  void set(int row, int col, bool value);

  const std::vector<std::uint64_t>& words() const { return words_; }

  friend bool operator==(const InstanceMask& a, const InstanceMask& b) {
    return a.width_ == b.width_ && a.height_ == b.height_ && a.words_ == b.words_;
  }

 private:
  int width_ = 0;
  int height_ = 0;
  std::int64_t area_ = 0;
  std::vector<std::uint64_t> words_;
};

// |a n b| / |a u b|; 0 when both masks are empty. Throws on dimension mismatch.
double mask_iou(const InstanceMask& a, const InstanceMask& b);
std::int64_t mask_intersection_px(const InstanceMask& a, const InstanceMask& b);

// Alternating run lengths in column-major order, first run counts zeros.
struct RlePayload {
  int width = 0;
  int height = 0;
  std::vector<std::uint32_t> counts;

  friend bool operator==(const RlePayload&, const RlePayload&) = default;
};

RlePayload rle_encode(const InstanceMask& mask);
InstanceMask rle_decode(const RlePayload& payload);  // throws on counts not summing to w*h

// JSON object {"size":[H,W],"counts":[...]}.
nlohmann::json rle_to_json(const RlePayload& payload);
RlePayload rle_from_json(const nlohmann::json& j);

// Center-point rasterization: a pixel is set iff its center is covered by
// the polygon under the polygon_covers tie rule. Which boundary pixels are
// set therefore depends on the grid resolution.
InstanceMask rasterize(const WorldPolygon& poly, const TileGrid& grid);

// Sutherland-Hodgman clip of every ring against an axis-aligned rectangle.
// Returns nullopt when nothing with positive area remains.
std::optional<WorldPolygon> clip_to_rect(const WorldPolygon& poly, double min_x, double min_y,
                                         double max_x, double max_y);

// GeoJSON-subset geometry: {"type":"Polygon","coordinates":[[...],...]},
// first ring exterior, rest holes, planar meter coordinates.
nlohmann::json polygon_to_geojson(const WorldPolygon& poly);
WorldPolygon polygon_from_geojson(const nlohmann::json& j);

}  // namespace roofkit::geo
