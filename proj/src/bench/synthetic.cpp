#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "m3sot/bench.hpp"
#include "m3sot/errors.hpp"

namespace m3sot {

namespace {

constexpr double kPi = 3.14159265358979323846;

double draw(std::mt19937_64& rng, const Interval& r) {
  if (r.hi <= r.lo) return r.lo;
  return std::uniform_real_distribution<double>(r.lo, r.hi)(rng);
}

// Uniform over the surface of an axis-aligned box centered at the origin.
std::vector<Vec3> shell_points(const Size3& s, std::size_t n, std::mt19937_64& rng) {
  const double areas[3] = {s.l * s.h, s.w * s.h, s.w * s.l};  // faces normal to x, y, z
  std::discrete_distribution<int> face({areas[0], areas[0], areas[1], areas[1], areas[2], areas[2]});
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  std::vector<Vec3> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int f = face(rng);
    const double sign = (f % 2 == 0) ? 0.5 : -0.5;
    Vec3 p{u(rng) * s.w, u(rng) * s.l, u(rng) * s.h};
    if (f / 2 == 0) p.x = sign * s.w;
    if (f / 2 == 1) p.y = sign * s.l;
    if (f / 2 == 2) p.z = sign * s.h;
    out.push_back(p);
  }
  return out;
}

}  // namespace

void SyntheticSceneConfig::validate() const {
  if (!(size.w > 0 && size.l > 0 && size.h > 0)) throw ConfigError("synthetic size must be positive");
  if (size_jitter < 0 || size_jitter >= 1) throw ConfigError("size_jitter must be in [0,1)");
  if (clutter_extent < 0) throw ConfigError("clutter_extent must be >= 0");
  for (double p : {occlusion_prob, drop_fraction, sparsity_ramp}) {
    if (!(p >= 0 && p <= 1)) throw ConfigError("probabilities and fractions must be in [0,1]");
  }
  for (const Interval& r : {step_x, step_y, step_z, step_yaw}) {
    if (r.hi < r.lo) throw ConfigError("motion interval has hi < lo");
  }
  if (frames < 2) throw ConfigError("a tracklet needs at least 2 frames");
}

Tracklet generate_synthetic_tracklet(const SyntheticSceneConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  Size3 size = cfg.size;
  if (cfg.size_jitter > 0) {
    std::uniform_real_distribution<double> j(1.0 - cfg.size_jitter, 1.0 + cfg.size_jitter);
    size = {size.w * j(rng), size.l * j(rng), size.h * j(rng)};
  }
  const std::vector<Vec3> shape = shell_points(size, cfg.object_points, rng);

  Box3D box;
  box.size = size;
  box.center = {draw(rng, {8.0, 20.0}), draw(rng, {-6.0, 6.0}), size.h / 2.0 - 1.7};
  box.yaw = normalize_angle(draw(rng, {-kPi, kPi}));

  Tracklet t;
  t.id = "syn-" + std::to_string(cfg.seed);
  t.category = cfg.category;
  for (std::size_t f = 0; f < cfg.frames; ++f) {
    if (f > 0) {
      const double lx = draw(rng, cfg.step_x), ly = draw(rng, cfg.step_y);
      const double c = std::cos(box.yaw), s = std::sin(box.yaw);
      box.center = box.center + Vec3{c * lx - s * ly, s * lx + c * ly, draw(rng, cfg.step_z)};
      box.yaw = normalize_angle(box.yaw + draw(rng, cfg.step_yaw));
    }

    // sparsity: keep a shrinking random subset of the template
    const double keep = 1.0 - cfg.sparsity_ramp * static_cast<double>(f) / static_cast<double>(cfg.frames - 1);
    std::vector<std::size_t> idx(shape.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(static_cast<std::size_t>(std::lround(keep * static_cast<double>(shape.size()))));
    std::sort(idx.begin(), idx.end());

    // occlusion: drop a contiguous angular sector around the object center
    const bool occluded = unit(rng) < cfg.occlusion_prob;
    const double start = unit(rng) * 2.0 * kPi, width = cfg.drop_fraction * 2.0 * kPi;

    Frame frame;
    frame.box = box;
    for (std::size_t i : idx) {
      if (occluded && width > 0) {
        double a = std::atan2(shape[i].y, shape[i].x) - start;
        a = std::fmod(a + 4.0 * kPi, 2.0 * kPi);
        if (a < width || width >= 2.0 * kPi) continue;
      }
      frame.cloud.points.push_back(from_box_frame(shape[i], box));
    }

    const Interval zr{box.center.z - size.h / 2.0 - 0.2, box.center.z + size.h / 2.0 + 0.5};
    for (std::size_t i = 0; i < cfg.clutter_points; ++i) {
      Vec3 p;
      for (int tries = 0; tries < 100; ++tries) {
        p = {box.center.x + draw(rng, {-cfg.clutter_extent, cfg.clutter_extent}),
             box.center.y + draw(rng, {-cfg.clutter_extent, cfg.clutter_extent}), draw(rng, zr)};
        if (!point_in_box(p, box)) break;
      }
      frame.cloud.points.push_back(p);
    }

    // sensor at the origin; order by azimuth then range
    std::sort(frame.cloud.points.begin(), frame.cloud.points.end(), [](const Vec3& a, const Vec3& b) {
      const double aa = std::atan2(a.y, a.x), ab = std::atan2(b.y, b.x);
      if (aa != ab) return aa < ab;
      return a.x * a.x + a.y * a.y < b.x * b.x + b.y * b.y;
    });
    t.frames.push_back(std::move(frame));
  }
  return t;
}

SyntheticSplit synthetic_split(std::size_t n_train, std::size_t n_test, std::uint64_t seed, SyntheticSceneConfig base) {
  std::mt19937_64 rng(seed);
  SyntheticSplit split;
  for (std::size_t i = 0; i < n_train + n_test; ++i) {
    base.seed = rng();
    Tracklet t = generate_synthetic_tracklet(base);
    char id[32];
    std::snprintf(id, sizeof id, "syn%llu-%04zu", static_cast<unsigned long long>(seed), i);
    t.id = id;
    (i < n_train ? split.train : split.test).push_back(std::move(t));
  }
  return split;
}

SyntheticSplit standard_benchmark() {
  SyntheticSceneConfig cfg;
  cfg.frames = 20;
  return synthetic_split(64, 16, 7, cfg);
}

}  // namespace m3sot
