#pragma once

// Simplified 3D reconstruction: one oriented plane per roof segment, masks
// extruded to ground level, OBJ export.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "roofkit/common.hpp"
#include "roofkit/geo.hpp"

namespace roofkit::lod2 {

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  friend Vec3 operator-(const Vec3& a, const Vec3& b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
  friend bool operator==(const Vec3&, const Vec3&) = default;
};

Vec3 cross(const Vec3& a, const Vec3& b);
double dot(const Vec3& a, const Vec3& b);
double norm(const Vec3& v);

// Whether the stored azimuth is the direction the roof faces (downslope) or
// its 180-degree complement; flips a single angle, nothing else.
enum class AzimuthConvention { facing, ridge };

struct RoofPlane {
  Vec3 normal;  // unit, nz = cos(angle) > 0
  Vec3 anchor;  // segment centroid with z = height

  double z_at(double x, double y) const;
};

// n = (sin a sin phi, sin a cos phi, cos a) with phi the compass direction
// the roof faces, clockwise from north (+y). angle = 90 is degenerate.
RoofPlane plane_from_attributes(geo::Point2 centroid, double height_m, double angle_deg,
                                double azimuth_deg,
                                AzimuthConvention convention = AzimuthConvention::facing);

enum class FaceLabel { roof, wall, ground };

struct BuildingMesh {
  std::string name;
  std::vector<Vec3> vertices;
  struct Face {
    int a = 0, b = 0, c = 0;
    FaceLabel label = FaceLabel::roof;
  };
  std::vector<Face> faces;
  bool touches_border = false;     // mask reached the tile edge; side closed there
  std::int64_t clamped_vertices = 0;  // roof vertices lifted below ground and clamped

  Vec3 face_normal(const Face& face) const;  // unit
  double face_area(const Face& face) const;
  double area(FaceLabel label) const;
};

// Pixel-edge boundary rings in world coordinates with collinear vertices
// removed; outer rings counter-clockwise, holes clockwise.
std::vector<geo::Ring> trace_boundary(const geo::InstanceMask& mask, const geo::TileGrid& grid);

geo::Point2 mask_centroid_world(const geo::InstanceMask& mask, const geo::TileGrid& grid);

// Roof surface from the mask lifted onto the plane, walls down to ground_z,
// closed with a ground face. Roof z is clamped to >= ground_z.
BuildingMesh extrude_segment(const geo::InstanceMask& mask, const RoofPlane& plane,
                             const geo::TileGrid& grid, double ground_z = 0.0);

// Text OBJ, one named object per mesh, faces grouped by label as materials.
void write_obj(std::ostream& out, std::span<const BuildingMesh> meshes);
void write_obj_file(const std::filesystem::path& path, std::span<const BuildingMesh> meshes);

struct ParsedObj {
  std::vector<Vec3> vertices;
  std::vector<std::string> objects;
  std::int64_t triangle_count = 0;
};
ParsedObj read_obj(std::istream& in);

}  // namespace roofkit::lod2
