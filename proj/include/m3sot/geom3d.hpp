#pragma once

#include <array>
#include <cmath>
#include <vector>

namespace m3sot {

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;

  friend Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
  friend Vec3 operator-(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
  friend Vec3 operator*(Vec3 a, double s) { return {a.x * s, a.y * s, a.z * s}; }
  friend bool operator==(const Vec3&, const Vec3&) = default;
  double norm() const { return std::sqrt(x * x + y * y + z * z); }
};

/// Box extents (w along the box x-axis, l along y, h along z), meters.
struct Size3 {
  double w = 1.0, l = 1.0, h = 1.0;
  friend bool operator==(const Size3&, const Size3&) = default;
};

/// Oriented box; yaw rotates about +z and is kept in (−π, π].
struct Box3D {
  Vec3 center;
  Size3 size;
  double yaw = 0.0;

  friend bool operator==(const Box3D&, const Box3D&) = default;
  double volume() const { return size.w * size.l * size.h; }
  /// Throws ValidationError for non-positive extents or non-finite fields.
  void validate() const;
};

/// World-frame box update: translation plus yaw increment.
struct RigidMotion {
  double dx = 0.0, dy = 0.0, dz = 0.0, dtheta = 0.0;
};

/// Points in meters, stored in a fixed order that the backbone relies on.
struct PointCloud {
  std::vector<Vec3> points;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  const Vec3& operator[](std::size_t i) const { return points[i]; }
  Vec3& operator[](std::size_t i) { return points[i]; }
  /// Flattened x,y,z triples.
  std::vector<double> flat() const;
  friend bool operator==(const PointCloud&, const PointCloud&) = default;
};

double normalize_angle(double a);

/// Boundary-inclusive membership in the box.
bool point_in_box(const Vec3& p, const Box3D& box);

Box3D apply_motion(const Box3D& box, const RigidMotion& m);

/// 3D IoU via BEV convex clipping times z-overlap. Exactly symmetric.
double box_iou_3d(const Box3D& a, const Box3D& b);

/// Area of the BEV rectangle intersection (convex polygon clipping).
double bev_intersection_area(const Box3D& a, const Box3D& b);

/// Euclidean distance between the box centers (3D).
double center_distance(const Box3D& a, const Box3D& b);

/// Express a world point in the box frame and back.
Vec3 to_box_frame(const Vec3& p, const Box3D& box);
Vec3 from_box_frame(const Vec3& p, const Box3D& box);
PointCloud to_box_frame(const PointCloud& cloud, const Box3D& box);
PointCloud from_box_frame(const PointCloud& cloud, const Box3D& box);

/// Box `inner` expressed relative to `ref` (and its inverse).
Box3D box_to_frame(const Box3D& inner, const Box3D& ref);
Box3D box_from_frame(const Box3D& local, const Box3D& ref);

/// Eight corners: bottom face counter-clockwise, then top face.
std::array<Vec3, 8> box_corners(const Box3D& box);

/// Same box with every half-extent grown by `margin` meters.
Box3D dilate(const Box3D& box, double margin);

}  // namespace m3sot
