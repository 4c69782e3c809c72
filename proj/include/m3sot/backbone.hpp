#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "m3sot/geom3d.hpp"
#include "m3sot/nn.hpp"
#include "m3sot/params.hpp"
#include "m3sot/tape.hpp"

namespace m3sot {

/// Per-point probability of lying inside the target box.
struct TargetnessMask {
  std::vector<double> values;

  std::size_t size() const { return values.size(); }
  friend bool operator==(const TargetnessMask&, const TargetnessMask&) = default;
};

enum class SamplingMode { kRange, kRandom };

/// Multi-field backbone configuration.
///
/// `ratios` are cumulative divisors of the input count: stage s keeps
/// N / ratios[s] points, so [2,4,8] on 1024 points yields stages of 512,
/// 256 and 128. Each entry must divide the next.
struct FieldConfig {
  std::vector<std::size_t> ratios{2, 4, 8};
  std::size_t k = 8;
  std::vector<std::size_t> channels{64, 128, 128};
  std::size_t input_points = 1024;
  SamplingMode sampling = SamplingMode::kRange;

  /// Widths for a ratio list of the given length ending at `out_channels`:
  /// the first stage uses half the width, later stages the full width.
  static std::vector<std::size_t> default_channels(std::size_t stages, std::size_t out_channels);
  std::size_t out_channels() const { return channels.back(); }
  std::size_t output_points() const { return (input_points + ratios.back() - 1) / ratios.back(); }
  void validate() const;
};

TargetnessMask compute_targetness_mask(const PointCloud& cloud, const Box3D& box);
TargetnessMask init_search_mask(std::size_t n);

/// Indices {0, ratio, 2·ratio, …} below n.
std::vector<std::uint32_t> range_indices(std::size_t n, std::size_t ratio);

struct SampledCloud {
  PointCloud cloud;
  Tensor feats;
  TargetnessMask mask;
};

/// Strided, order-preserving selection applied to coordinates, features and
/// mask alike. A non-multiple N behaves as if the last point were repeated.
SampledCloud range_sample(const PointCloud& cloud, const Tensor& feats, const TargetnessMask& mask,
                          std::size_t ratio);

/// N×k neighbor table (self included, ties to the lower index).
std::vector<std::uint32_t> knn_indices(const PointCloud& cloud, std::size_t k);

/// EdgeConv weights: "<prefix>.w" [2·C_in × C_out] and "<prefix>.b" [C_out].
void init_edgeconv(ParameterStore& params, const std::string& prefix, std::size_t in, std::size_t out,
                   std::mt19937_64& rng);

/// max over neighbors j of ReLU(W·[f_i ‖ f_j − f_i] + b), per channel.
Var edgeconv(Tape& tape, ParameterStore& params, const std::string& prefix, const Var& feats,
             const std::vector<std::uint32_t>& neighbors, std::size_t k);

struct BackboneOutput {
  PointCloud cloud;
  Var feats;
  TargetnessMask mask;
};

class Backbone {
 public:
  Backbone() = default;
  explicit Backbone(FieldConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

  const FieldConfig& config() const { return cfg_; }
  void init(ParameterStore& params, std::mt19937_64& rng) const;

  /// Alternates dynamic-graph EdgeConv on the current coordinates with
  /// sampling. Initial features are the raw coordinates. `rng` is only
  /// consulted in random sampling mode.
  BackboneOutput extract_features(Tape& tape, ParameterStore& params, const PointCloud& cloud,
                                  const TargetnessMask& mask, std::mt19937_64* rng = nullptr) const;

 private:
  FieldConfig cfg_;
};

/// Learned per-point embeddings: coordinates (PE) and scalar mask (ME),
/// each one hidden linear+ReLU followed by a linear map to `channels`.
struct PointEncoders {
  nn::Linear pe1, pe2, me1, me2;

  static PointEncoders create(ParameterStore& params, std::size_t channels, std::mt19937_64& rng);
  Var positional_encoding(Tape& tape, ParameterStore& params, const PointCloud& cloud) const;
  Var mask_encoding(Tape& tape, ParameterStore& params, const TargetnessMask& mask) const;
};

/// Coordinates as an N×3 constant.
Var cloud_var(Tape& tape, const PointCloud& cloud);

}  // namespace m3sot
