#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "m3sot/bench.hpp"
#include "m3sot/errors.hpp"

namespace m3sot {

namespace {

constexpr double kPi = 3.14159265358979323846;

Vec3 rotate(const Calibration& c, const Vec3& v) {
  return {c[0] * v.x + c[1] * v.y + c[2] * v.z, c[4] * v.x + c[5] * v.y + c[6] * v.z,
          c[8] * v.x + c[9] * v.y + c[10] * v.z};
}

Vec3 rotate_inv(const Calibration& c, const Vec3& v) {
  return {c[0] * v.x + c[4] * v.y + c[8] * v.z, c[1] * v.x + c[5] * v.y + c[9] * v.z,
          c[2] * v.x + c[6] * v.y + c[10] * v.z};
}

Vec3 offset(const Calibration& c) { return {c[3], c[7], c[11]}; }

std::filesystem::path scan_path(const std::filesystem::path& dir, int frame) {
  char name[32];
  std::snprintf(name, sizeof name, "%06d.bin", frame);
  return dir / name;
}

}  // namespace

Calibration default_calibration() { return {0, 0, 1, 0, -1, 0, 0, 0, 0, -1, 0, 0}; }

Calibration load_calibration(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("missing calibration file " + path.string());
  Calibration c{};
  for (double& v : c) {
    if (!(in >> v)) throw ParseError("calibration " + path.string() + " needs 12 numbers");
  }
  return c;
}

void save_calibration(const Calibration& c, const std::filesystem::path& path) {
  std::ofstream out(path);
  char buf[64];
  for (std::size_t i = 0; i < c.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", c[i]);
    out << buf << (i % 4 == 3 ? '\n' : ' ');
  }
}

PointCloud read_kitti_scan(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read scan " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() % 16 != 0) {
    throw FormatError(path.string() + ": " + std::to_string(bytes.size()) + " bytes is not a multiple of 16");
  }
  PointCloud cloud;
  cloud.points.reserve(bytes.size() / 16);
  for (std::size_t off = 0; off < bytes.size(); off += 16) {
    float v[3];
    for (int k = 0; k < 3; ++k) {
      std::uint32_t u;
      std::memcpy(&u, bytes.data() + off + 4 * k, 4);
      if constexpr (std::endian::native == std::endian::big) u = __builtin_bswap32(u);
      v[k] = std::bit_cast<float>(u);
    }
    cloud.points.push_back({v[0], v[1], v[2]});
  }
  return cloud;
}

void write_kitti_scan(const PointCloud& cloud, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write scan " + path.string());
  for (const auto& p : cloud.points) {
    const float v[4] = {static_cast<float>(p.x), static_cast<float>(p.y), static_cast<float>(p.z), 0.0f};
    for (float f : v) {
      std::uint32_t u = std::bit_cast<std::uint32_t>(f);
      if constexpr (std::endian::native == std::endian::big) u = __builtin_bswap32(u);
      out.write(reinterpret_cast<const char*>(&u), 4);
    }
  }
}

std::vector<KittiLabel> read_kitti_labels(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read labels " + path.string());
  std::vector<KittiLabel> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ss(line);
    KittiLabel l;
    double trunc, occ, alpha, b0, b1, b2, b3;
    if (!(ss >> l.frame >> l.track_id >> l.type >> trunc >> occ >> alpha >> b0 >> b1 >> b2 >> b3 >> l.h >> l.w >>
          l.l >> l.x >> l.y >> l.z >> l.ry)) {
      throw ParseError(path.string() + " line " + std::to_string(lineno) + ": malformed label row");
    }
    out.push_back(l);
  }
  return out;
}

Box3D kitti_label_to_box(const KittiLabel& label, const Calibration& calib) {
  // KITTI locations are the bottom-face center with camera y pointing down.
  const Vec3 center_cam{label.x, label.y - label.h / 2.0, label.z};
  const Vec3 heading = rotate(calib, Vec3{std::cos(label.ry), 0.0, -std::sin(label.ry)});
  Box3D box;
  box.center = rotate(calib, center_cam) + offset(calib);
  box.size = {label.w, label.l, label.h};
  box.yaw = normalize_angle(std::atan2(heading.y, heading.x) - kPi / 2.0);
  return box;
}

KittiLabel box_to_kitti_label(const Box3D& box, const Calibration& calib) {
  KittiLabel l;
  const Vec3 c = rotate_inv(calib, box.center - offset(calib));
  const double heading = box.yaw + kPi / 2.0;
  const Vec3 d = rotate_inv(calib, Vec3{std::cos(heading), std::sin(heading), 0.0});
  l.h = box.size.h;
  l.w = box.size.w;
  l.l = box.size.l;
  l.x = c.x;
  l.y = c.y + box.size.h / 2.0;
  l.z = c.z;
  l.ry = std::atan2(-d.z, d.x);
  return l;
}

Tracklet import_kitti(const std::filesystem::path& velodyne_dir, const std::filesystem::path& label_file,
                      const std::filesystem::path& calib_file, int track_id) {
  if (calib_file.empty() || !std::filesystem::exists(calib_file)) {
    throw ConfigError("missing calibration file " + calib_file.string());
  }
  const Calibration calib = load_calibration(calib_file);
  std::vector<KittiLabel> rows;
  for (const auto& l : read_kitti_labels(label_file)) {
    if (l.track_id == track_id) rows.push_back(l);
  }
  std::stable_sort(rows.begin(), rows.end(), [](const KittiLabel& a, const KittiLabel& b) { return a.frame < b.frame; });
  Tracklet t;
  t.id = label_file.stem().string() + ":" + std::to_string(track_id);
  t.category = rows.empty() ? "" : rows.front().type;
  for (const auto& l : rows) {
    t.frames.push_back(Frame{read_kitti_scan(scan_path(velodyne_dir, l.frame)), kitti_label_to_box(l, calib)});
  }
  t.validate();
  return t;
}

void export_kitti(const Tracklet& t, const std::filesystem::path& dir, int track_id, const Calibration& calib) {
  std::filesystem::create_directories(dir / "velodyne");
  save_calibration(calib, dir / "calib.txt");
  std::ofstream labels(dir / "label.txt");
  char buf[512];
  for (std::size_t i = 0; i < t.frames.size(); ++i) {
    const int frame = static_cast<int>(i);
    write_kitti_scan(t.frames[i].cloud, scan_path(dir / "velodyne", frame));
    const KittiLabel l = box_to_kitti_label(t.frames[i].box, calib);
    std::snprintf(buf, sizeof buf,
                  "%d %d %s 0 0 0 0 0 0 0 %.17g %.17g %.17g %.17g %.17g %.17g %.17g\n", frame, track_id,
                  t.category.empty() ? "Car" : t.category.c_str(), l.h, l.w, l.l, l.x, l.y, l.z, l.ry);
    labels << buf;
  }
}

}  // namespace m3sot
