#include "roofkit/lod2.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace roofkit::lod2 {

namespace {

constexpr double kDegToRad = 3.14159265358979323846 / 180.0;

}  // namespace

Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}

double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }

double norm(const Vec3& v) { return std::sqrt(dot(v, v)); }

double RoofPlane::z_at(double x, double y) const {
  return anchor.z - (normal.x * (x - anchor.x) + normal.y * (y - anchor.y)) / normal.z;
}

RoofPlane plane_from_attributes(geo::Point2 centroid, double height_m, double angle_deg,
                                double azimuth_deg, AzimuthConvention convention) {
  if (angle_deg < 0.0 || angle_deg >= 90.0)
    throw InvalidInput("plane angle must lie in [0, 90); 90 is a degenerate vertical plane");
  if (azimuth_deg < 0.0 || azimuth_deg >= 360.0)
    throw InvalidInput("plane azimuth must lie in [0, 360)");

  double facing_deg = azimuth_deg;
  if (convention == AzimuthConvention::ridge) {
    facing_deg += 180.0;
    if (facing_deg >= 360.0) facing_deg -= 360.0;
  }

  const double a = angle_deg * kDegToRad;
  const double phi = facing_deg * kDegToRad;
  RoofPlane plane;
  plane.normal = {std::sin(a) * std::sin(phi), std::sin(a) * std::cos(phi), std::cos(a)};
  plane.anchor = {centroid.x, centroid.y, height_m};
  return plane;
}

Vec3 BuildingMesh::face_normal(const Face& face) const {
  const Vec3 n =
      cross(vertices[face.b] - vertices[face.a], vertices[face.c] - vertices[face.a]);
  const double len = norm(n);
  if (len == 0.0) throw InvalidInput("degenerate mesh face");
  return {n.x / len, n.y / len, n.z / len};
}

double BuildingMesh::face_area(const Face& face) const {
  return 0.5 * norm(cross(vertices[face.b] - vertices[face.a],
                          vertices[face.c] - vertices[face.a]));
}

double BuildingMesh::area(FaceLabel label) const {
  double total = 0.0;
  for (const Face& face : faces) {
    if (face.label == label) total += face_area(face);
  }
  return total;
}

namespace {

// Boundary edges on the pixel-corner lattice, oriented so the mask interior
// sits on the world-space left (counter-clockwise outer rings after the
// y-flip into world coordinates).
struct LatticeEdge {
  int x0, y0, x1, y1;
};

struct EdgeGraph {
  std::vector<LatticeEdge> edges;
  std::vector<char> used;
  std::map<std::pair<int, int>, std::vector<int>> outgoing;

  void add(int x0, int y0, int x1, int y1) {
    outgoing[{x0, y0}].push_back(static_cast<int>(edges.size()));
    edges.push_back({x0, y0, x1, y1});
    used.push_back(0);
  }
};

bool is_set(const geo::InstanceMask& mask, int row, int col) {
  if (row < 0 || col < 0 || row >= mask.height() || col >= mask.width()) return false;
  return mask.test(row, col);
}

// Remove vertices whose neighbors are collinear (axis-aligned input, so a
// simple direction comparison suffices), including across the wrap.
void simplify_collinear(std::vector<std::pair<int, int>>& loop) {
  std::vector<std::pair<int, int>> out;
  const std::size_t n = loop.size();
  for (std::size_t i = 0; i < n; ++i) {
    const auto& prev = loop[(i + n - 1) % n];
    const auto& cur = loop[i];
    const auto& next = loop[(i + 1) % n];
    const int d1x = cur.first - prev.first, d1y = cur.second - prev.second;
    const int d2x = next.first - cur.first, d2y = next.second - cur.second;
    if (d1x * d2y - d1y * d2x != 0) out.push_back(cur);
  }
  loop.swap(out);
}

}  // namespace

std::vector<geo::Ring> trace_boundary(const geo::InstanceMask& mask, const geo::TileGrid& grid) {
  EdgeGraph graph;
  for (int r = 0; r < mask.height(); ++r) {
    for (int c = 0; c < mask.width(); ++c) {
      if (!mask.test(r, c)) continue;
      if (!is_set(mask, r, c - 1)) graph.add(c, r, c, r + 1);          // west side, walk down
      if (!is_set(mask, r + 1, c)) graph.add(c, r + 1, c + 1, r + 1);  // south side, walk east
      if (!is_set(mask, r, c + 1)) graph.add(c + 1, r + 1, c + 1, r);  // east side, walk up
      if (!is_set(mask, r - 1, c)) graph.add(c + 1, r, c, r);          // north side, walk west
    }
  }

  std::vector<geo::Ring> rings;
  for (std::size_t start = 0; start < graph.edges.size(); ++start) {
    if (graph.used[start]) continue;

    std::vector<std::pair<int, int>> loop;
    const int start_x = graph.edges[start].x0;
    const int start_y = graph.edges[start].y0;
    int current = static_cast<int>(start);
    while (true) {
      graph.used[current] = 1;
      const LatticeEdge& e = graph.edges[current];
      loop.push_back({e.x0, e.y0});
      if (e.x1 == start_x && e.y1 == start_y) break;  // ring closed

      const auto it = graph.outgoing.find({e.x1, e.y1});
      if (it == graph.outgoing.end()) throw InvalidInput("boundary trace hit a dead end");
      // At checkerboard corners two continuations exist; take the sharpest
      // world-space left turn (most negative cross in pixel coordinates) so
      // diagonal contacts stay separate rings.
      int next = -1;
      int best_cross = 2;
      const int dx1 = e.x1 - e.x0, dy1 = e.y1 - e.y0;
      for (int cand : it->second) {
        if (graph.used[cand]) continue;
        const LatticeEdge& ce = graph.edges[cand];
        const int cr = dx1 * (ce.y1 - ce.y0) - dy1 * (ce.x1 - ce.x0);
        if (cr < best_cross) {
          best_cross = cr;
          next = cand;
        }
      }
      if (next < 0) throw InvalidInput("boundary trace hit a dead end");
      current = next;
    }

    simplify_collinear(loop);
    geo::Ring ring;
    for (const auto& [cx, cy] : loop) ring.push_back(grid.corner(cx, cy));
    rings.push_back(std::move(ring));
  }
  return rings;
}

geo::Point2 mask_centroid_world(const geo::InstanceMask& mask, const geo::TileGrid& grid) {
  if (mask.empty()) throw InvalidInput("centroid of an empty mask");
  double sx = 0.0, sy = 0.0;
  const auto& words = mask.words();
  for (std::size_t wi = 0; wi < words.size(); ++wi) {
    std::uint64_t word = words[wi];
    while (word != 0) {
      const int bit = std::countr_zero(word);
      word &= word - 1;
      const std::size_t idx = (wi << 6) + static_cast<std::size_t>(bit);
      const int row = static_cast<int>(idx / mask.width());
      const int col = static_cast<int>(idx % mask.width());
      const geo::Point2 p = grid.pixel_center(row, col);
      sx += p.x;
      sy += p.y;
    }
  }
  const double n = static_cast<double>(mask.area_px());
  return {sx / n, sy / n};
}

namespace {

// Maximal rectangles from vertically merged row spans; exact tiling of the
// mask, no triangulation needed.
struct PixelRect {
  int r0, r1, c0, c1;  // half-open
};

std::vector<PixelRect> decompose_rectangles(const geo::InstanceMask& mask) {
  std::vector<PixelRect> out;
  struct Active {
    int c0, c1, r0;
  };
  std::vector<Active> active;

  for (int r = 0; r <= mask.height(); ++r) {
    // Row spans of the current row (empty past the last row).
    std::vector<std::pair<int, int>> spans;
    if (r < mask.height()) {
      int c = 0;
      while (c < mask.width()) {
        if (!mask.test(r, c)) {
          ++c;
          continue;
        }
        int end = c;
        while (end < mask.width() && mask.test(r, end)) ++end;
        spans.push_back({c, end});
        c = end;
      }
    }

    std::vector<Active> next;
    std::vector<char> span_matched(spans.size(), 0);
    for (const Active& a : active) {
      bool extended = false;
      for (std::size_t s = 0; s < spans.size(); ++s) {
        if (!span_matched[s] && spans[s].first == a.c0 && spans[s].second == a.c1) {
          span_matched[s] = 1;
          next.push_back(a);
          extended = true;
          break;
        }
      }
      if (!extended) out.push_back({a.r0, r, a.c0, a.c1});
    }
    for (std::size_t s = 0; s < spans.size(); ++s) {
      if (!span_matched[s]) next.push_back({spans[s].first, spans[s].second, r});
    }
    active.swap(next);
  }
  return out;
}

}  // namespace

BuildingMesh extrude_segment(const geo::InstanceMask& mask, const RoofPlane& plane,
                             const geo::TileGrid& grid, double ground_z) {
  if (mask.empty()) throw InvalidInput("cannot extrude an empty mask");
  grid.validate();

  BuildingMesh mesh;
  std::map<std::tuple<double, double, double>, int> vertex_index;
  auto vertex = [&](double x, double y, double z) {
    const auto key = std::make_tuple(x, y, z);
    const auto it = vertex_index.find(key);
    if (it != vertex_index.end()) return it->second;
    const int idx = static_cast<int>(mesh.vertices.size());
    mesh.vertices.push_back({x, y, z});
    vertex_index.emplace(key, idx);
    return idx;
  };
  auto roof_z = [&](const geo::Point2& p) {
    const double z = plane.z_at(p.x, p.y);
    if (z < ground_z) {
      ++mesh.clamped_vertices;
      return ground_z;
    }
    return z;
  };

  // Border contact: the ring around such a mask runs along the tile edge.
  for (int r = 0; r < mask.height() && !mesh.touches_border; ++r) {
    if (mask.test(r, 0) || mask.test(r, mask.width() - 1)) mesh.touches_border = true;
  }
  for (int c = 0; c < mask.width() && !mesh.touches_border; ++c) {
    if (mask.test(0, c) || mask.test(mask.height() - 1, c)) mesh.touches_border = true;
  }

  // Roof and ground from the rectangle decomposition.
  for (const PixelRect& rect : decompose_rectangles(mask)) {
    const geo::Point2 a = grid.corner(rect.c0, rect.r1);  // world lower-left
    const geo::Point2 b = grid.corner(rect.c1, rect.r1);
    const geo::Point2 c = grid.corner(rect.c1, rect.r0);
    const geo::Point2 d = grid.corner(rect.c0, rect.r0);
    const int ra = vertex(a.x, a.y, roof_z(a));
    const int rb = vertex(b.x, b.y, roof_z(b));
    const int rc = vertex(c.x, c.y, roof_z(c));
    const int rd = vertex(d.x, d.y, roof_z(d));
    mesh.faces.push_back({ra, rb, rc, FaceLabel::roof});
    mesh.faces.push_back({ra, rc, rd, FaceLabel::roof});

    const int ga = vertex(a.x, a.y, ground_z);
    const int gb = vertex(b.x, b.y, ground_z);
    const int gc = vertex(c.x, c.y, ground_z);
    const int gd = vertex(d.x, d.y, ground_z);
    mesh.faces.push_back({ga, gd, gc, FaceLabel::ground});
    mesh.faces.push_back({ga, gc, gb, FaceLabel::ground});
  }

  // Walls along every boundary ring (holes included; their reversed
  // orientation keeps normals pointing away from the solid).
  for (const geo::Ring& ring : trace_boundary(mask, grid)) {
    const std::size_t n = ring.size();
    for (std::size_t i = 0; i < n; ++i) {
      const geo::Point2& a = ring[i];
      const geo::Point2& b = ring[(i + 1) % n];
      const int at = vertex(a.x, a.y, roof_z(a));
      const int bt = vertex(b.x, b.y, roof_z(b));
      const int ag = vertex(a.x, a.y, ground_z);
      const int bg = vertex(b.x, b.y, ground_z);
      if (at != ag) mesh.faces.push_back({at, ag, bg, FaceLabel::wall});
      if (bt != bg) mesh.faces.push_back({at, bg, bt, FaceLabel::wall});
    }
  }
  return mesh;
}

namespace {

const char* label_name(FaceLabel label) {
  switch (label) {
    case FaceLabel::roof: return "roof";
    case FaceLabel::wall: return "wall";
    case FaceLabel::ground: return "ground";
  }
  return "?";
}

std::string fmt_coord(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

}  // namespace

void write_obj(std::ostream& out, std::span<const BuildingMesh> meshes) {
  out << "# roofkit LoD2 export\n";
  int offset = 1;  // OBJ indices are global and 1-based
  for (const BuildingMesh& mesh : meshes) {
    out << "o " << mesh.name << "\n";
    for (const Vec3& v : mesh.vertices)
      out << "v " << fmt_coord(v.x) << ' ' << fmt_coord(v.y) << ' ' << fmt_coord(v.z) << "\n";
    for (FaceLabel label : {FaceLabel::roof, FaceLabel::wall, FaceLabel::ground}) {
      bool any = false;
      for (const auto& face : mesh.faces) {
        if (face.label != label) continue;
        if (!any) {
          out << "usemtl " << label_name(label) << "\n";
          any = true;
        }
        out << "f " << offset + face.a << ' ' << offset + face.b << ' ' << offset + face.c
            << "\n";
      }
    }
    offset += static_cast<int>(mesh.vertices.size());
  }
}

void write_obj_file(const std::filesystem::path& path, std::span<const BuildingMesh> meshes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write obj file: " + path.string());
  write_obj(out, meshes);
  if (!out) throw IoError("short write: " + path.string());
}

ParsedObj read_obj(std::istream& in) {
  ParsedObj parsed;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "v") {
      Vec3 v;
      ls >> v.x >> v.y >> v.z;
      if (!ls) throw InvalidInput("malformed obj vertex line: " + line);
      parsed.vertices.push_back(v);
    } else if (tag == "f") {
      ++parsed.triangle_count;
    } else if (tag == "o") {
      std::string name;
      ls >> name;
      parsed.objects.push_back(name);
    }
  }
  return parsed;
}

}  // namespace roofkit::lod2
