#include "m3sot/backbone.hpp"

#include <algorithm>

#include "m3sot/errors.hpp"
#include "m3sot/kernels.hpp"
#include "m3sot/ops.hpp"

namespace m3sot {

std::vector<std::size_t> FieldConfig::default_channels(std::size_t stages, std::size_t out_channels) {
  std::vector<std::size_t> ch(stages, out_channels);
  if (stages > 1) ch.front() = std::max<std::size_t>(out_channels / 2, 1);
  return ch;
}

void FieldConfig::validate() const {
  if (ratios.empty()) throw ConfigError("field ratios must be nonempty");
  if (k < 1) throw ConfigError("neighbor count k must be >= 1");
  if (channels.size() != ratios.size()) throw ConfigError("one channel width per field stage required");
  std::size_t prev = 1;
  for (std::size_t r : ratios) {
    if (r < 1) throw ConfigError("field ratios must be >= 1");
    if (r % prev != 0) throw ConfigError("each field ratio must divide the next");
    prev = r;
  }
  for (std::size_t c : channels) {
    if (c < 1) throw ConfigError("channel widths must be >= 1");
  }
  if (input_points < 1) throw ConfigError("input point count must be >= 1");
}

TargetnessMask compute_targetness_mask(const PointCloud& cloud, const Box3D& box) {
  TargetnessMask m;
  m.values.reserve(cloud.size());
  for (const auto& p : cloud.points) m.values.push_back(point_in_box(p, box) ? 1.0 : 0.0);
  return m;
}

TargetnessMask init_search_mask(std::size_t n) {
  if (n < 1) throw ContractError("search mask needs at least one point");
  return TargetnessMask{std::vector<double>(n, 0.5)};
}

std::vector<std::uint32_t> range_indices(std::size_t n, std::size_t ratio) {
  if (ratio < 1) throw ConfigError("sampling ratio must be >= 1");
  std::vector<std::uint32_t> idx;
  idx.reserve((n + ratio - 1) / ratio);
  for (std::size_t i = 0; i < n; i += ratio) idx.push_back(static_cast<std::uint32_t>(i));
  return idx;
}

SampledCloud range_sample(const PointCloud& cloud, const Tensor& feats, const TargetnessMask& mask,
                          std::size_t ratio) {
  if (feats.rows() != cloud.size() || mask.size() != cloud.size()) {
    throw DimensionError("range_sample: cloud, features and mask must share N");
  }
  const auto idx = range_indices(cloud.size(), ratio);
  SampledCloud out;
  const std::size_t c = feats.cols();
  out.feats = Tensor(Shape{idx.size(), c});
  for (std::size_t r = 0; r < idx.size(); ++r) {
    out.cloud.points.push_back(cloud[idx[r]]);
    out.mask.values.push_back(mask.values[idx[r]]);
    for (std::size_t j = 0; j < c; ++j) out.feats(r, j) = feats(idx[r], j);
  }
  return out;
}

std::vector<std::uint32_t> knn_indices(const PointCloud& cloud, std::size_t k) {
  if (k > cloud.size()) {
    throw ContractError("knn: k=" + std::to_string(k) + " exceeds point count " + std::to_string(cloud.size()));
  }
  std::vector<std::uint32_t> out(cloud.size() * k);
  const auto xyz = cloud.flat();
  kernels::knn(xyz, cloud.size(), k, out);
  return out;
}

void init_edgeconv(ParameterStore& params, const std::string& prefix, std::size_t in, std::size_t out,
                   std::mt19937_64& rng) {
  params.add_uniform(prefix + ".w", Shape{2 * in, out}, 2 * in, rng);
  params.add_uniform(prefix + ".b", Shape{out}, 2 * in, rng);
}

Var edgeconv(Tape& tape, ParameterStore& params, const std::string& prefix, const Var& feats,
             const std::vector<std::uint32_t>& neighbors, std::size_t k) {
  const std::size_t cin = feats.cols();
  Var w = tape.leaf(params.at(prefix + ".w"));
  Var b = tape.leaf(params.at(prefix + ".b"));
  if (w.rows() != 2 * cin) {
    throw DimensionError("edgeconv " + prefix + ": weight " + shape_str(w.shape()) + " for " +
                         std::to_string(cin) + " input channels");
  }
  // [f_i ‖ f_j − f_i]·W = f_i·(W_top − W_bottom) + f_j·W_bottom
  Var w_top = ops::slice_rows(w, 0, cin);
  Var w_bottom = ops::slice_rows(w, cin, 2 * cin);
  Var self_term = ops::add_bias(ops::matmul(feats, ops::sub(w_top, w_bottom)), b);
  Var neighbor_term = ops::matmul(feats, w_bottom);
  return ops::relu(ops::edge_max(self_term, neighbor_term, neighbors, k));
}

void Backbone::init(ParameterStore& params, std::mt19937_64& rng) const {
  std::size_t in = 3;
  for (std::size_t s = 0; s < cfg_.ratios.size(); ++s) {
    init_edgeconv(params, "backbone.edge" + std::to_string(s), in, cfg_.channels[s], rng);
    in = cfg_.channels[s];
  }
}

Var cloud_var(Tape& tape, const PointCloud& cloud) {
  return tape.constant(Tensor(Shape{cloud.size(), 3}, cloud.flat()));
}

BackboneOutput Backbone::extract_features(Tape& tape, ParameterStore& params, const PointCloud& cloud,
                                          const TargetnessMask& mask, std::mt19937_64* rng) const {
  if (cloud.size() != cfg_.input_points) {
    throw ConfigError("backbone expects " + std::to_string(cfg_.input_points) + " points, got " +
                      std::to_string(cloud.size()));
  }
  if (mask.size() != cloud.size()) throw DimensionError("backbone: mask and cloud sizes differ");
  if (cfg_.sampling == SamplingMode::kRandom && rng == nullptr) {
    throw ConfigError("random sampling mode needs a random generator");
  }
  BackboneOutput cur{cloud, cloud_var(tape, cloud), mask};
  std::size_t prev_ratio = 1;
  for (std::size_t s = 0; s < cfg_.ratios.size(); ++s) {
    const std::size_t k = std::min(cfg_.k, cur.cloud.size());
    const auto nbrs = knn_indices(cur.cloud, k);
    Var f = edgeconv(tape, params, "backbone.edge" + std::to_string(s), cur.feats, nbrs, k);

    const std::size_t stride = cfg_.ratios[s] / prev_ratio;
    prev_ratio = cfg_.ratios[s];
    std::vector<std::uint32_t> idx;
    if (cfg_.sampling == SamplingMode::kRange || stride == 1) {
      idx = range_indices(cur.cloud.size(), stride);
    } else {
      const std::size_t keep = (cur.cloud.size() + stride - 1) / stride;
      std::vector<std::uint32_t> all(cur.cloud.size());
      for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<std::uint32_t>(i);
      for (std::size_t i = 0; i < keep; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, all.size() - 1);
        std::swap(all[i], all[pick(*rng)]);
      }
      idx.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(keep));
      std::sort(idx.begin(), idx.end());
    }
    BackboneOutput next;
    for (std::uint32_t i : idx) {
      next.cloud.points.push_back(cur.cloud[i]);
      next.mask.values.push_back(cur.mask.values[i]);
    }
    next.feats = idx.size() == cur.cloud.size() ? f : ops::gather_rows(f, idx);
    cur = std::move(next);
  }
  return cur;
}

PointEncoders PointEncoders::create(ParameterStore& params, std::size_t channels, std::mt19937_64& rng) {
  PointEncoders e;
  e.pe1 = nn::Linear::create(params, "pe.l1", 3, channels, rng);
  e.pe2 = nn::Linear::create(params, "pe.l2", channels, channels, rng);
  e.me1 = nn::Linear::create(params, "me.l1", 1, channels, rng);
  e.me2 = nn::Linear::create(params, "me.l2", channels, channels, rng);
  return e;
}

Var PointEncoders::positional_encoding(Tape& tape, ParameterStore& params, const PointCloud& cloud) const {
  return pe2(tape, params, ops::relu(pe1(tape, params, cloud_var(tape, cloud))));
}

Var PointEncoders::mask_encoding(Tape& tape, ParameterStore& params, const TargetnessMask& mask) const {
  for (double v : mask.values) {
    if (!(v >= 0.0 && v <= 1.0)) throw ContractError("mask values must lie in [0,1]");
  }
  Var m = tape.constant(Tensor(Shape{mask.size(), 1}, mask.values));
  return me2(tape, params, ops::relu(me1(tape, params, m)));
}

}  // namespace m3sot
