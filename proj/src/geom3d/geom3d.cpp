#include "m3sot/geom3d.hpp"

#include <algorithm>
#include <numbers>
#include <tuple>

#include "m3sot/errors.hpp"

namespace m3sot {

namespace {

struct Pt2 {
  double x, y;
};

std::vector<Pt2> bev_polygon(const Box3D& b) {
  const double c = std::cos(b.yaw), s = std::sin(b.yaw);
  const double hw = b.size.w / 2, hl = b.size.l / 2;
  const std::array<Pt2, 4> local{{{-hw, -hl}, {hw, -hl}, {hw, hl}, {-hw, hl}}};
  std::vector<Pt2> out;
  out.reserve(4);
  for (const auto& p : local) out.push_back({b.center.x + c * p.x - s * p.y, b.center.y + s * p.x + c * p.y});
  return out;
}

double cross(const Pt2& o, const Pt2& a, const Pt2& b) { return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x); }

// Sutherland–Hodgman: clip `subject` by the counter-clockwise convex `clip`.
std::vector<Pt2> clip_polygon(std::vector<Pt2> subject, const std::vector<Pt2>& clip) {
  for (std::size_t e = 0; e < clip.size() && !subject.empty(); ++e) {
    const Pt2& a = clip[e];
    const Pt2& b = clip[(e + 1) % clip.size()];
    std::vector<Pt2> next;
    next.reserve(subject.size() + 2);
    for (std::size_t i = 0; i < subject.size(); ++i) {
      const Pt2& p = subject[i];
      const Pt2& q = subject[(i + 1) % subject.size()];
      const double dp = cross(a, b, p), dq = cross(a, b, q);
      if (dp >= 0) next.push_back(p);
      if ((dp >= 0) != (dq >= 0)) {
        const double t = dp / (dp - dq);
        next.push_back({p.x + t * (q.x - p.x), p.y + t * (q.y - p.y)});
      }
    }
    subject = std::move(next);
  }
  return subject;
}

double polygon_area(const std::vector<Pt2>& poly) {
  if (poly.size() < 3) return 0.0;
  double a = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Pt2& p = poly[i];
    const Pt2& q = poly[(i + 1) % poly.size()];
    a += p.x * q.y - q.x * p.y;
  }
  return std::abs(a) / 2;
}

auto box_key(const Box3D& b) {
  return std::make_tuple(b.center.x, b.center.y, b.center.z, b.size.w, b.size.l, b.size.h, b.yaw);
}

}  // namespace

std::vector<double> PointCloud::flat() const {
  std::vector<double> out;
  out.reserve(points.size() * 3);
  for (const auto& p : points) {
    out.push_back(p.x);
    out.push_back(p.y);
    out.push_back(p.z);
  }
  return out;
}

void Box3D::validate() const {
  const bool finite = std::isfinite(center.x) && std::isfinite(center.y) && std::isfinite(center.z) &&
                      std::isfinite(yaw) && std::isfinite(size.w) && std::isfinite(size.l) &&
                      std::isfinite(size.h);
  if (!finite) throw ValidationError("box has non-finite fields");
  if (!(size.w > 0 && size.l > 0 && size.h > 0)) throw ValidationError("box extents must be positive");
}

double normalize_angle(double a) {
  constexpr double pi = std::numbers::pi;
  a = std::fmod(a, 2 * pi);
  if (a <= -pi) a += 2 * pi;
  if (a > pi) a -= 2 * pi;
  return a;
}

bool point_in_box(const Vec3& p, const Box3D& box) {
  const Vec3 q = to_box_frame(p, box);
  return std::abs(q.x) <= box.size.w / 2 && std::abs(q.y) <= box.size.l / 2 && std::abs(q.z) <= box.size.h / 2;
}

Box3D apply_motion(const Box3D& box, const RigidMotion& m) {
  Box3D out = box;
  out.center = box.center + Vec3{m.dx, m.dy, m.dz};
  out.yaw = normalize_angle(box.yaw + m.dtheta);
  return out;
}

double bev_intersection_area(const Box3D& a, const Box3D& b) {
  const bool swap = box_key(b) < box_key(a);
  const Box3D& first = swap ? b : a;
  const Box3D& second = swap ? a : b;
  return polygon_area(clip_polygon(bev_polygon(first), bev_polygon(second)));
}

double box_iou_3d(const Box3D& a, const Box3D& b) {
  const double zlo = std::max(a.center.z - a.size.h / 2, b.center.z - b.size.h / 2);
  const double zhi = std::min(a.center.z + a.size.h / 2, b.center.z + b.size.h / 2);
  if (zhi <= zlo) return 0.0;
  const double area = bev_intersection_area(a, b);
  if (area < 1e-12) return 0.0;
  const double inter = area * (zhi - zlo);
  const double iou = inter / (a.volume() + b.volume() - inter);
  return std::clamp(iou, 0.0, 1.0);
}

double center_distance(const Box3D& a, const Box3D& b) { return (a.center - b.center).norm(); }

Vec3 to_box_frame(const Vec3& p, const Box3D& box) {
  const double c = std::cos(box.yaw), s = std::sin(box.yaw);
  const Vec3 d = p - box.center;
  return {c * d.x + s * d.y, -s * d.x + c * d.y, d.z};
}

Vec3 from_box_frame(const Vec3& p, const Box3D& box) {
  const double c = std::cos(box.yaw), s = std::sin(box.yaw);
  return Vec3{c * p.x - s * p.y, s * p.x + c * p.y, p.z} + box.center;
}

PointCloud to_box_frame(const PointCloud& cloud, const Box3D& box) {
  PointCloud out;
  out.points.reserve(cloud.size());
  for (const auto& p : cloud.points) out.points.push_back(to_box_frame(p, box));
  return out;
}

PointCloud from_box_frame(const PointCloud& cloud, const Box3D& box) {
  PointCloud out;
  out.points.reserve(cloud.size());
  for (const auto& p : cloud.points) out.points.push_back(from_box_frame(p, box));
  return out;
}

Box3D box_to_frame(const Box3D& inner, const Box3D& ref) {
  return Box3D{to_box_frame(inner.center, ref), inner.size, normalize_angle(inner.yaw - ref.yaw)};
}

Box3D box_from_frame(const Box3D& local, const Box3D& ref) {
  return Box3D{from_box_frame(local.center, ref), local.size, normalize_angle(local.yaw + ref.yaw)};
}

std::array<Vec3, 8> box_corners(const Box3D& box) {
  const double hw = box.size.w / 2, hl = box.size.l / 2, hh = box.size.h / 2;
  const std::array<Vec3, 8> local{{{-hw, -hl, -hh},
                                   {hw, -hl, -hh},
                                   {hw, hl, -hh},
                                   {-hw, hl, -hh},
                                   {-hw, -hl, hh},
                                   {hw, -hl, hh},
                                   {hw, hl, hh},
                                   {-hw, hl, hh}}};
  std::array<Vec3, 8> out;
  for (std::size_t i = 0; i < 8; ++i) out[i] = from_box_frame(local[i], box);
  return out;
}

Box3D dilate(const Box3D& box, double margin) {
  Box3D out = box;
  out.size = {box.size.w + 2 * margin, box.size.l + 2 * margin, box.size.h + 2 * margin};
  return out;
}

}  // namespace m3sot
