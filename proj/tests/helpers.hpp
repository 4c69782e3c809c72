#pragma once

#include <random>

#include "m3sot/bench.hpp"
#include "m3sot/tensor.hpp"

namespace testing {

inline m3sot::Tensor random_tensor(m3sot::Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  m3sot::Tensor t(std::move(shape));
  for (double& v : t.data()) v = u(rng);
  return t;
}

inline m3sot::PointCloud random_cloud(std::size_t n, std::mt19937_64& rng, double extent = 2.0) {
  std::uniform_real_distribution<double> u(-extent, extent);
  m3sot::PointCloud c;
  for (std::size_t i = 0; i < n; ++i) c.points.push_back({u(rng), u(rng), u(rng)});
  return c;
}

inline m3sot::Box3D random_box(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> c(-1.0, 1.0), s(0.5, 3.0), y(-3.14159, 3.14159);
  return {{c(rng), c(rng), c(rng)}, {s(rng), s(rng), s(rng)}, y(rng)};
}

/// N = 8 points after one halving stage, C = 8, L = 2.
inline m3sot::ModelConfig toy_model() {
  m3sot::ModelConfig m;
  m.field.input_points = 16;
  m.field.ratios = {2};
  m.field.channels = {8};
  m.field.k = 4;
  m.layers = 2;
  m.ffn_hidden = 8;
  m.head_hidden = 8;
  m.templates = 2;
  return m;
}

}  // namespace testing
