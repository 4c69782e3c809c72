#pragma once

#include <random>
#include <vector>

#include "m3sot/geom3d.hpp"
#include "m3sot/nn.hpp"

namespace m3sot {

/// A scored box candidate in the canonical (reference-box) frame.
struct Proposal {
  Box3D box;
  double confidence = 0.0;
  std::size_t source_template = 1;
  std::size_t point_index = 0;
};

struct ProposalSet {
  std::vector<Proposal> proposals;
};

/// Differentiable locator outputs for one search block (all N×1).
struct LocatorOutput {
  Var yaw_residual;
  Var score_logit;
  Var confidence;
  ProposalSet set;
};

/// Per-point box proposals from the final layer's search block: an MLP over
/// [feats ‖ center vote ‖ mask] gives a yaw residual and a score; the box
/// sits at the center vote with the fixed target size, and its confidence is
/// logistic(score) · mask.
class Locator {
 public:
  Locator() = default;
  Locator(std::size_t channels, std::size_t hidden) : channels_(channels), hidden_(hidden) {}

  void init(ParameterStore& params, std::mt19937_64& rng) const;

  /// `previous_yaw` is the reference box yaw in the canonical frame (0 when
  /// the search block is expressed relative to the previous box).
  LocatorOutput propose(Tape& tape, ParameterStore& params, const Var& feats, const Var& centers,
                        const Var& mask, const Size3& target_size, std::size_t source_template,
                        double previous_yaw = 0.0) const;

 private:
  nn::Mlp3 mlp() const;
  std::size_t channels_ = 128;
  std::size_t hidden_ = 128;
};

/// Global argmax of confidence; ties go to the smaller template index, then
/// the smaller point index. Throws ContractError when every set is empty.
Proposal select_best(const std::vector<ProposalSet>& sets);

}  // namespace m3sot
