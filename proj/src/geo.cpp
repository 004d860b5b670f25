#include "roofkit/geo.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

#include <nlohmann/json.hpp>

namespace roofkit::geo {

namespace {

double cross(const Point2& o, const Point2& a, const Point2& b) {
  return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

bool on_segment(const Point2& p, const Point2& a, const Point2& b) {
  if (cross(a, b, p) != 0.0) return false;
  return std::min(a.x, b.x) <= p.x && p.x <= std::max(a.x, b.x) &&
         std::min(a.y, b.y) <= p.y && p.y <= std::max(a.y, b.y);
}

int distinct_vertices(const Ring& ring) {
  int n = 0;
  for (std::size_t i = 0; i < ring.size(); ++i) {
    if (ring[i] != ring[(i + 1) % ring.size()]) ++n;
  }
  return n;
}

void validate_ring(const Ring& ring) {
  if (ring.size() < 3 || distinct_vertices(ring) < 3)
    throw InvalidInput("polygon ring needs at least 3 distinct vertices");
  if (ring_signed_area(ring) == 0.0) throw InvalidInput("polygon ring has zero area");
}

}  // namespace

double ring_signed_area(const Ring& ring) {
  double acc = 0.0;
  const std::size_t n = ring.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Point2& a = ring[i];
    const Point2& b = ring[(i + 1) % n];
    acc += a.x * b.y - b.x * a.y;
  }
  return 0.5 * acc;
}

void WorldPolygon::validate_and_normalize() {
  validate_ring(exterior);
  if (ring_signed_area(exterior) < 0.0) std::reverse(exterior.begin(), exterior.end());
  for (Ring& hole : holes) {
    validate_ring(hole);
    if (ring_signed_area(hole) > 0.0) std::reverse(hole.begin(), hole.end());
  }
}

double WorldPolygon::area() const {
  double a = std::abs(ring_signed_area(exterior));
  for (const Ring& hole : holes) a -= std::abs(ring_signed_area(hole));
  return a;
}

double WorldPolygon::perimeter() const {
  double p = 0.0;
  const std::size_t n = exterior.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Point2& a = exterior[i];
    const Point2& b = exterior[(i + 1) % n];
    p += std::hypot(b.x - a.x, b.y - a.y);
  }
  return p;
}

Point2 WorldPolygon::centroid() const {
  // Signed-area weighted centroid; hole rings carry opposite orientation
  // so they subtract automatically.
  double ax = 0.0, ay = 0.0, atot = 0.0;
  auto accumulate = [&](const Ring& ring, double sign) {
    const std::size_t n = ring.size();
    for (std::size_t i = 0; i < n; ++i) {
      const Point2& a = ring[i];
      const Point2& b = ring[(i + 1) % n];
      const double w = a.x * b.y - b.x * a.y;
      ax += sign * w * (a.x + b.x);
      ay += sign * w * (a.y + b.y);
      atot += sign * w;
    }
  };
  accumulate(exterior, ring_signed_area(exterior) > 0 ? 1.0 : -1.0);
  for (const Ring& hole : holes) accumulate(hole, ring_signed_area(hole) > 0 ? -1.0 : 1.0);
  if (atot == 0.0) throw InvalidInput("degenerate polygon: zero area centroid");
  return {ax / (3.0 * atot), ay / (3.0 * atot)};
}

WorldPolygon::Bounds WorldPolygon::bounds() const {
  Bounds b{exterior[0].x, exterior[0].y, exterior[0].x, exterior[0].y};
  for (const Point2& p : exterior) {
    b.min_x = std::min(b.min_x, p.x);
    b.min_y = std::min(b.min_y, p.y);
    b.max_x = std::max(b.max_x, p.x);
    b.max_y = std::max(b.max_y, p.y);
  }
  return b;
}

WorldPolygon WorldPolygon::rectangle(double min_x, double min_y, double max_x, double max_y) {
  WorldPolygon poly;
  poly.exterior = {{min_x, min_y}, {max_x, min_y}, {max_x, max_y}, {min_x, max_y}};
  return poly;
}

RingSide point_vs_ring(const Point2& p, const Ring& ring) {
  int winding = 0;
  const std::size_t n = ring.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Point2& a = ring[i];
    const Point2& b = ring[(i + 1) % n];
    if (on_segment(p, a, b)) return RingSide::boundary;
    if (a.y <= p.y) {
      if (b.y > p.y && cross(a, b, p) > 0.0) ++winding;
    } else {
      if (b.y <= p.y && cross(a, b, p) < 0.0) --winding;
    }
  }
  return winding != 0 ? RingSide::inside : RingSide::outside;
}

bool polygon_covers(const WorldPolygon& poly, const Point2& p) {
  const RingSide ext = point_vs_ring(p, poly.exterior);
  if (ext == RingSide::outside) return false;
  if (ext == RingSide::boundary) return true;
  for (const Ring& hole : poly.holes) {
    if (point_vs_ring(p, hole) == RingSide::inside) return false;
  }
  return true;
}

void TileGrid::validate() const {
  if (extent <= 0.0) throw InvalidInput("tile grid extent must be positive");
  if (width <= 0 || height <= 0) throw InvalidInput("tile grid needs positive pixel dimensions");
  if (width != height) throw InvalidInput("tile grid must be square");
}

Point2 TileGrid::pixel_center(int row, int col) const {
  const double mpp = meters_per_pixel();
  return {origin_x + (col + 0.5) * mpp, origin_y + extent - (row + 0.5) * mpp};
}

Point2 TileGrid::corner(int cx, int cy) const {
  const double mpp = meters_per_pixel();
  return {origin_x + cx * mpp, origin_y + extent - cy * mpp};
}

InstanceMask::InstanceMask(int width, int height) : width_(width), height_(height) {
  if (width <= 0 || height <= 0) throw InvalidInput("mask dimensions must be positive");
  const std::size_t bits = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  words_.assign((bits + 63) / 64, 0);
}

bool InstanceMask::test(int row, int col) const {
  const std::size_t bit = static_cast<std::size_t>(row) * width_ + col;
  return (words_[bit >> 6] >> (bit & 63)) & 1u;
}

void InstanceMask::set(int row, int col, bool value) {
  const std::size_t bit = static_cast<std::size_t>(row) * width_ + col;
  std::uint64_t& word = words_[bit >> 6];
  const std::uint64_t m = std::uint64_t{1} << (bit & 63);
  const bool cur = word & m;
  if (cur == value) return;
  word ^= m;
  area_ += value ? 1 : -1;
}

std::int64_t mask_intersection_px(const InstanceMask& a, const InstanceMask& b) {
  if (a.width() != b.width() || a.height() != b.height())
    throw InvalidInput("mask dimension mismatch");
  std::int64_t inter = 0;
  const auto& wa = a.words();
  const auto& wb = b.words();
  for (std::size_t i = 0; i < wa.size(); ++i) inter += std::popcount(wa[i] & wb[i]);
  return inter;
}

double mask_iou(const InstanceMask& a, const InstanceMask& b) {
  const std::int64_t inter = mask_intersection_px(a, b);
  const std::int64_t uni = a.area_px() + b.area_px() - inter;
  if (uni == 0) return 0.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

RlePayload rle_encode(const InstanceMask& mask) {
  RlePayload payload;
  payload.width = mask.width();
  payload.height = mask.height();
  bool current = false;
  std::uint32_t run = 0;
  for (int col = 0; col < mask.width(); ++col) {
    for (int row = 0; row < mask.height(); ++row) {
      const bool v = mask.test(row, col);
      if (v == current) {
        ++run;
      } else {
        payload.counts.push_back(run);
        current = v;
        run = 1;
      }
    }
  }
  payload.counts.push_back(run);
  return payload;
}

InstanceMask rle_decode(const RlePayload& payload) {
  if (payload.width <= 0 || payload.height <= 0)
    throw InvalidInput("rle payload has invalid dimensions");
  const std::uint64_t total = static_cast<std::uint64_t>(payload.width) * payload.height;
  std::uint64_t sum = 0;
  for (std::uint32_t c : payload.counts) sum += c;
  if (sum != total) throw InvalidInput("rle counts do not sum to width*height");

  InstanceMask mask(payload.width, payload.height);
  std::uint64_t pos = 0;
  bool value = false;
  for (std::uint32_t c : payload.counts) {
    if (value) {
      for (std::uint32_t k = 0; k < c; ++k) {
        const std::uint64_t idx = pos + k;
        mask.set(static_cast<int>(idx % payload.height), static_cast<int>(idx / payload.height),
                 true);
      }
    }
    pos += c;
    value = !value;
  }
  return mask;
}

nlohmann::json rle_to_json(const RlePayload& payload) {
  return nlohmann::json{{"size", {payload.height, payload.width}}, {"counts", payload.counts}};
}

RlePayload rle_from_json(const nlohmann::json& j) {
  RlePayload payload;
  try {
    payload.height = j.at("size").at(0).get<int>();
    payload.width = j.at("size").at(1).get<int>();
    payload.counts = j.at("counts").get<std::vector<std::uint32_t>>();
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("malformed rle json: ") + e.what());
  }
  return payload;
}

InstanceMask rasterize(const WorldPolygon& poly, const TileGrid& grid) {
  grid.validate();
  WorldPolygon checked = poly;
  checked.validate_and_normalize();

  InstanceMask mask(grid.width, grid.height);
  const auto b = checked.bounds();
  const double mpp = grid.meters_per_pixel();
  const double top = grid.origin_y + grid.extent;

  // Pixel index ranges whose centers can possibly fall inside the bounds.
  int col_lo = std::max(0, static_cast<int>(std::floor((b.min_x - grid.origin_x) / mpp - 0.5)));
  int col_hi = std::min(grid.width - 1, static_cast<int>(std::ceil((b.max_x - grid.origin_x) / mpp)));
  int row_lo = std::max(0, static_cast<int>(std::floor((top - b.max_y) / mpp - 0.5)));
  int row_hi = std::min(grid.height - 1, static_cast<int>(std::ceil((top - b.min_y) / mpp)));

  for (int row = row_lo; row <= row_hi; ++row) {
    for (int col = col_lo; col <= col_hi; ++col) {
      if (polygon_covers(checked, grid.pixel_center(row, col))) mask.set(row, col, true);
    }
  }
  return mask;
}

namespace {

// Clip a ring against one half-plane keep(p) with intersection points on
// the boundary line. Orientation of the ring is preserved.
template <typename Keep, typename Intersect>
Ring clip_half_plane(const Ring& ring, Keep keep, Intersect intersect) {
  Ring out;
  const std::size_t n = ring.size();
  if (n == 0) return out;
  for (std::size_t i = 0; i < n; ++i) {
    const Point2& cur = ring[i];
    const Point2& prev = ring[(i + n - 1) % n];
    const bool cur_in = keep(cur);
    const bool prev_in = keep(prev);
    if (cur_in) {
      if (!prev_in) out.push_back(intersect(prev, cur));
      out.push_back(cur);
    } else if (prev_in) {
      out.push_back(intersect(prev, cur));
    }
  }
  // Drop consecutive duplicates introduced by vertices on the clip line.
  Ring dedup;
  for (const Point2& p : out) {
    if (dedup.empty() || !(dedup.back() == p)) dedup.push_back(p);
  }
  while (dedup.size() > 1 && dedup.front() == dedup.back()) dedup.pop_back();
  return dedup;
}

Ring clip_ring_to_rect(Ring ring, double min_x, double min_y, double max_x, double max_y) {
  auto lerp_x = [](const Point2& a, const Point2& b, double x) {
    const double t = (x - a.x) / (b.x - a.x);
    return Point2{x, a.y + t * (b.y - a.y)};
  };
  auto lerp_y = [](const Point2& a, const Point2& b, double y) {
    const double t = (y - a.y) / (b.y - a.y);
    return Point2{a.x + t * (b.x - a.x), y};
  };
  ring = clip_half_plane(
      ring, [&](const Point2& p) { return p.x >= min_x; },
      [&](const Point2& a, const Point2& b) { return lerp_x(a, b, min_x); });
  ring = clip_half_plane(
      ring, [&](const Point2& p) { return p.x <= max_x; },
      [&](const Point2& a, const Point2& b) { return lerp_x(a, b, max_x); });
  ring = clip_half_plane(
      ring, [&](const Point2& p) { return p.y >= min_y; },
      [&](const Point2& a, const Point2& b) { return lerp_y(a, b, min_y); });
  ring = clip_half_plane(
      ring, [&](const Point2& p) { return p.y <= max_y; },
      [&](const Point2& a, const Point2& b) { return lerp_y(a, b, max_y); });
  return ring;
}

}  // namespace

std::optional<WorldPolygon> clip_to_rect(const WorldPolygon& poly, double min_x, double min_y,
                                         double max_x, double max_y) {
  WorldPolygon out;
  out.exterior = clip_ring_to_rect(poly.exterior, min_x, min_y, max_x, max_y);
  if (out.exterior.size() < 3 || std::abs(ring_signed_area(out.exterior)) == 0.0)
    return std::nullopt;
  for (const Ring& hole : poly.holes) {
    Ring clipped = clip_ring_to_rect(hole, min_x, min_y, max_x, max_y);
    if (clipped.size() >= 3 && std::abs(ring_signed_area(clipped)) > 0.0)
      out.holes.push_back(std::move(clipped));
  }
  out.validate_and_normalize();
  return out;
}

nlohmann::json polygon_to_geojson(const WorldPolygon& poly) {
  auto ring_to_json = [](const Ring& ring) {
    nlohmann::json arr = nlohmann::json::array();
    for (const Point2& p : ring) arr.push_back({p.x, p.y});
    arr.push_back({ring.front().x, ring.front().y});  // GeoJSON rings are closed
    return arr;
  };
  nlohmann::json coords = nlohmann::json::array();
  coords.push_back(ring_to_json(poly.exterior));
  for (const Ring& hole : poly.holes) coords.push_back(ring_to_json(hole));
  return nlohmann::json{{"type", "Polygon"}, {"coordinates", coords}};
}

WorldPolygon polygon_from_geojson(const nlohmann::json& j) {
  if (!j.is_object() || j.value("type", "") != "Polygon")
    throw InvalidInput("geometry must be a GeoJSON Polygon");
  const auto& coords = j.at("coordinates");
  if (!coords.is_array() || coords.empty()) throw InvalidInput("polygon has no rings");

  auto ring_from_json = [](const nlohmann::json& arr) {
    Ring ring;
    for (const auto& pt : arr) {
      if (!pt.is_array() || pt.size() < 2) throw InvalidInput("malformed polygon coordinate");
      ring.push_back({pt.at(0).get<double>(), pt.at(1).get<double>()});
    }
    if (ring.size() > 1 && ring.front() == ring.back()) ring.pop_back();
    return ring;
  };

  WorldPolygon poly;
  poly.exterior = ring_from_json(coords.at(0));
  for (std::size_t i = 1; i < coords.size(); ++i) poly.holes.push_back(ring_from_json(coords.at(i)));
  poly.validate_and_normalize();
  return poly;
}

}  // namespace roofkit::geo
