#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "m3sot/backbone.hpp"
#include "m3sot/locator.hpp"
#include "m3sot/spaceformer.hpp"

namespace m3sot {

/// How the template set reaches the search frame.
enum class Paradigm {
  kManyToOne,   // each template paired with the search frame independently
  kSelfChain,   // pilot (a): frame-by-frame concatenation + self-attention
  kCrossChain,  // pilot (b): frame-by-frame cross-attention
};

struct ModelConfig {
  FieldConfig field;
  std::size_t layers = 4;
  HeadMode head_mode = HeadMode::kVariable;
  std::size_t ffn_hidden = 256;
  std::size_t head_hidden = 128;
  std::size_t templates = 2;
  Paradigm paradigm = Paradigm::kManyToOne;
  /// Optional per-template depth L_k (index 0 = most recent); empty = uniform.
  std::vector<std::size_t> template_layers;
  double crop_margin = 2.0;

  std::size_t channels() const { return field.out_channels(); }
  std::size_t sample_points() const { return field.input_points; }
  HeadSchedule schedule_for(std::size_t template_index) const;
  void validate() const;

  /// 1024 input points, [2,4,8], (64,128,128), L = 4.
  static ModelConfig full_size();
  /// Reduced widths and point counts that train on one CPU core in minutes.
  static ModelConfig desk();
};

/// A template expressed in the reference (search) frame.
struct TemplateView {
  PointCloud cloud;
  TargetnessMask mask;
  Box3D box;
};

struct StepInputs {
  std::vector<TemplateView> templates;  // most recent first, exactly K
  PointCloud search;                    // reference frame
  Size3 target_size;
  std::mt19937_64* rng = nullptr;       // random sampling mode only
};

/// Outputs of one template-search pair.
struct PairOutputs {
  std::size_t template_index = 1;
  std::vector<LayerOutput> layers;
  PointCloud template_coords;
  PointCloud search_coords;
  TargetnessMask template_mask;
  Box3D template_box;
  LocatorOutput locator;
};

struct StepOutputs {
  std::vector<PairOutputs> pairs;
  std::vector<ProposalSet> proposal_sets() const;
};

/// Backbone + encoders + attention stack + locator behind one parameter store.
class Network {
 public:
  Network() = default;
  explicit Network(ModelConfig cfg);

  const ModelConfig& config() const { return cfg_; }
  const Backbone& backbone() const { return backbone_; }
  const PointEncoders& encoders() const { return encoders_; }
  const SpaceFormer& spaceformer() const { return spaceformer_; }
  const Locator& locator() const { return locator_; }

  /// Deterministic initialization from a seed.
  ParameterStore init(std::uint64_t seed) const;
  /// Throws ConfigError when the store lacks a parameter the config needs.
  void check(const ParameterStore& params) const;

  StepOutputs forward(Tape& tape, ParameterStore& params, const StepInputs& in) const;

 private:
  BackboneOutput propagate_chain(Tape& tape, ParameterStore& params, std::vector<BackboneOutput> chain) const;
  Var cross_attend(Tape& tape, ParameterStore& params, const BackboneOutput& prev, const BackboneOutput& next) const;

  ModelConfig cfg_;
  Backbone backbone_;
  PointEncoders encoders_;
  SpaceFormer spaceformer_;
  Locator locator_;
};

}  // namespace m3sot
