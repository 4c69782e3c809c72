#include "m3sot/locator.hpp"

#include "m3sot/errors.hpp"
#include "m3sot/ops.hpp"

namespace m3sot {

nn::Mlp3 Locator::mlp() const {
  const std::size_t in = channels_ + 4;
  return nn::Mlp3{nn::Linear{"loc.l1", in, hidden_}, nn::Linear{"loc.l2", hidden_, hidden_},
                  nn::Linear{"loc.l3", hidden_, 2}, nn::LayerNorm{"loc.n1", hidden_},
                  nn::LayerNorm{"loc.n2", hidden_}};
}

void Locator::init(ParameterStore& params, std::mt19937_64& rng) const {
  nn::Mlp3::create(params, "loc", channels_ + 4, hidden_, 2, rng);
}

LocatorOutput Locator::propose(Tape& tape, ParameterStore& params, const Var& feats, const Var& centers,
                               const Var& mask, const Size3& target_size, std::size_t source_template,
                               double previous_yaw) const {
  const std::size_t n = feats.rows();
  if (n == 0) throw ContractError("locator needs at least one search point");
  if (centers.rows() != n || mask.rows() != n || centers.cols() != 3 || mask.cols() != 1) {
    throw DimensionError("locator: feature, center and mask rows must align");
  }
  const Var out = mlp()(tape, params, ops::concat_cols({feats, centers, mask}));
  LocatorOutput lo;
  lo.yaw_residual = ops::slice_cols(out, 0, 1);
  lo.score_logit = ops::slice_cols(out, 1, 2);
  lo.confidence = ops::mul(ops::sigmoid(lo.score_logit), mask);

  const Tensor& c = centers.value();
  const Tensor& th = lo.yaw_residual.value();
  const Tensor& conf = lo.confidence.value();
  lo.set.proposals.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Proposal p;
    p.box = Box3D{{c(i, 0), c(i, 1), c(i, 2)}, target_size, normalize_angle(previous_yaw + th[i])};
    p.confidence = conf[i];
    p.source_template = source_template;
    p.point_index = i;
    lo.set.proposals.push_back(p);
  }
  return lo;
}

Proposal select_best(const std::vector<ProposalSet>& sets) {
  const Proposal* best = nullptr;
  for (const auto& set : sets) {
    for (const auto& p : set.proposals) {
      if (best == nullptr || p.confidence > best->confidence ||
          (p.confidence == best->confidence &&
           (p.source_template < best->source_template ||
            (p.source_template == best->source_template && p.point_index < best->point_index)))) {
        best = &p;
      }
    }
  }
  if (best == nullptr) throw ContractError("select_best: no proposals");
  return *best;
}

}  // namespace m3sot
