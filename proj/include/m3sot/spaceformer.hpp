#pragma once

#include <random>
#include <string>
#include <vector>

#include "m3sot/backbone.hpp"
#include "m3sot/nn.hpp"

namespace m3sot {

/// One historical template paired with the search frame (features from
/// the shared backbone). template_index 1 is the most recent frame.
struct TemplateSearchPair {
  Var template_feats;
  Var search_feats;
  TargetnessMask template_mask;
  TargetnessMask search_mask;
  PointCloud template_coords;
  PointCloud search_coords;
  std::size_t template_index = 1;

  std::size_t points() const { return template_coords.size(); }
};

enum class HeadMode { kFixed, kVariable };

/// Attention head count per layer.
struct HeadSchedule {
  std::vector<std::size_t> layer_heads;

  /// H = 1 at every layer.
  static HeadSchedule fixed(std::size_t layers);
  /// H_l = 2^(l−1), clamped to the largest power of two dividing `channels`.
  static HeadSchedule variable(std::size_t layers, std::size_t channels);
  static HeadSchedule make(std::size_t layers, std::size_t channels, HeadMode mode);

  std::size_t layers() const { return layer_heads.size(); }
  /// Throws ConfigError unless every H divides `channels`.
  void validate(std::size_t channels) const;
};

/// Concatenated template-then-search rows fed to the attention stack.
struct GeoInputs {
  Var feats;
  Var pe;
  Var me;
  TargetnessMask mask;
  PointCloud coords;
};

/// Per-layer supervision taps. Rows [0, N) are the template, [N, 2N) the search.
struct LayerOutput {
  Var feats;
  Var mask_pred;    // 2N×1, in (0,1)
  Var center_pred;  // 2N×3, canonical frame
};

struct SpaceFormerConfig {
  std::size_t channels = 128;
  std::size_t layers = 4;
  std::size_t ffn_hidden = 256;
  std::size_t head_hidden = 128;
};

class SpaceFormer {
 public:
  SpaceFormer() = default;
  explicit SpaceFormer(SpaceFormerConfig cfg) : cfg_(cfg) {}

  const SpaceFormerConfig& config() const { return cfg_; }
  void init(ParameterStore& params, std::mt19937_64& rng) const;

  GeoInputs geoformer_concat(Tape& tape, ParameterStore& params, const PointEncoders& enc,
                             const TemplateSearchPair& pair) const;

  /// LN → shared Q/K projections of (x̃ + pe) → attention over x̃ and over
  /// the mask encoding → residual → FFN(LN(·)) → residual.
  Var space_attention_layer(Tape& tape, ParameterStore& params, std::size_t layer, const Var& feats,
                            const Var& pe, const Var& me, std::size_t heads) const;

  /// Mask logistic and per-point center votes for one layer. Votes are
  /// offsets added to the row's own coordinates.
  std::pair<Var, Var> predict_layer_heads(Tape& tape, ParameterStore& params, std::size_t layer,
                                          const Var& feats, const PointCloud& coords) const;

  /// Runs the first schedule.layers() layers, keeping every layer's taps.
  std::vector<LayerOutput> forward(Tape& tape, ParameterStore& params, const PointEncoders& enc,
                                   const TemplateSearchPair& pair, const HeadSchedule& schedule) const;

  /// Same stack on precomputed inputs.
  std::vector<LayerOutput> forward(Tape& tape, ParameterStore& params, const GeoInputs& in,
                                   const HeadSchedule& schedule) const;

 private:
  std::string layer_prefix(std::size_t layer) const { return "sf.layer" + std::to_string(layer); }
  SpaceFormerConfig cfg_;
};

/// Multi-head attention core shared by the stack and the pilot harness:
/// softmax(Q_h K_hᵀ / √d_h) applied to each value matrix, heads concatenated.
/// Returns one output per entry of `values`.
std::vector<Var> multi_head_attention(const Var& q, const Var& k, const std::vector<Var>& values,
                                      std::size_t heads);

/// Splits a 2N-row tensor into its template and search blocks.
std::pair<Var, Var> split_blocks(const Var& x);

}  // namespace m3sot
