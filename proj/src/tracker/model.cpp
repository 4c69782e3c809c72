#include "m3sot/model.hpp"

#include "m3sot/errors.hpp"
#include "m3sot/ops.hpp"

namespace m3sot {

namespace {

PointEncoders encoders_for(std::size_t c) {
  return PointEncoders{nn::Linear{"pe.l1", 3, c}, nn::Linear{"pe.l2", c, c}, nn::Linear{"me.l1", 1, c},
                       nn::Linear{"me.l2", c, c}};
}

}  // namespace

HeadSchedule ModelConfig::schedule_for(std::size_t template_index) const {
  std::size_t l = layers;
  if (!template_layers.empty()) {
    const std::size_t i = std::min(template_index, template_layers.size()) - 1;
    l = std::min(template_layers[i], layers);
  }
  return HeadSchedule::make(l, channels(), head_mode);
}

void ModelConfig::validate() const {
  field.validate();
  if (layers < 1) throw ConfigError("at least one attention layer is required");
  if (templates < 1) throw ConfigError("template set size K must be >= 1");
  for (std::size_t l : template_layers) {
    if (l < 1) throw ConfigError("per-template depth must be >= 1");
  }
  HeadSchedule::make(layers, channels(), head_mode).validate(channels());
  if (crop_margin < 0) throw ConfigError("crop margin must be >= 0");
}

ModelConfig ModelConfig::full_size() { return ModelConfig{}; }

ModelConfig ModelConfig::desk() {
  ModelConfig m;
  m.field.input_points = 256;
  m.field.ratios = {2, 4, 8};
  m.field.channels = {16, 32, 32};
  m.field.k = 8;
  m.layers = 4;
  m.ffn_hidden = 64;
  m.head_hidden = 32;
  return m;
}

std::vector<ProposalSet> StepOutputs::proposal_sets() const {
  std::vector<ProposalSet> sets;
  for (const auto& p : pairs) sets.push_back(p.locator.set);
  return sets;
}

Network::Network(ModelConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  backbone_ = Backbone(cfg_.field);
  encoders_ = encoders_for(cfg_.channels());
  spaceformer_ = SpaceFormer(SpaceFormerConfig{cfg_.channels(), cfg_.layers, cfg_.ffn_hidden, cfg_.head_hidden});
  locator_ = Locator(cfg_.channels(), cfg_.head_hidden);
}

ParameterStore Network::init(std::uint64_t seed) const {
  ParameterStore params;
  std::mt19937_64 rng(seed);
  backbone_.init(params, rng);
  PointEncoders::create(params, cfg_.channels(), rng);
  spaceformer_.init(params, rng);
  locator_.init(params, rng);
  if (cfg_.paradigm == Paradigm::kCrossChain) {
    const std::size_t c = cfg_.channels();
    nn::LayerNorm::create(params, "pilot.cross.ln_q", c);
    nn::LayerNorm::create(params, "pilot.cross.ln_kv", c);
    for (const char* name : {".q", ".k", ".v", ".v_me", ".out", ".out_me"}) {
      nn::Linear::create(params, std::string("pilot.cross") + name, c, c, rng, std::string(name) != ".k");
    }
    nn::LayerNorm::create(params, "pilot.cross.ln2", c);
    nn::Linear::create(params, "pilot.cross.ffn1", c, cfg_.ffn_hidden, rng);
    nn::Linear::create(params, "pilot.cross.ffn2", cfg_.ffn_hidden, c, rng);
  }
  return params;
}

void Network::check(const ParameterStore& params) const {
  const ParameterStore ref = init(0);
  for (const auto& [name, t] : ref) {
    if (!params.contains(name)) throw ConfigError("checkpoint lacks parameter " + name);
    if (params.at(name).shape() != t.shape()) {
      throw ConfigError("checkpoint parameter " + name + " has shape " + shape_str(params.at(name).shape()) +
                        ", model expects " + shape_str(t.shape()));
    }
  }
}

Var Network::cross_attend(Tape& tape, ParameterStore& params, const BackboneOutput& prev,
                          const BackboneOutput& next) const {
  const std::size_t c = cfg_.channels();
  auto lin = [&](const char* name, std::size_t in, std::size_t out) {
    return nn::Linear{std::string("pilot.cross") + name, in, out};
  };
  const Var qn = nn::LayerNorm{"pilot.cross.ln_q", c}(tape, params, next.feats);
  const Var kn = nn::LayerNorm{"pilot.cross.ln_kv", c}(tape, params, prev.feats);
  const Var q = lin(".q", c, c)(tape, params, ops::add(qn, encoders_.positional_encoding(tape, params, next.cloud)));
  const Var k = nn::Linear{"pilot.cross.k", c, c, false}(tape, params, ops::add(kn, encoders_.positional_encoding(tape, params, prev.cloud)));
  const Var v = lin(".v", c, c)(tape, params, kn);
  const Var v_me = lin(".v_me", c, c)(tape, params, encoders_.mask_encoding(tape, params, prev.mask));
  const auto att = multi_head_attention(q, k, {v, v_me}, 1);
  Var y = ops::add(next.feats, lin(".out", c, c)(tape, params, att[0]));
  y = ops::add(y, lin(".out_me", c, c)(tape, params, att[1]));
  const Var h = nn::LayerNorm{"pilot.cross.ln2", c}(tape, params, y);
  return ops::add(y, lin(".ffn2", cfg_.ffn_hidden, c)(
                         tape, params, ops::relu(lin(".ffn1", c, cfg_.ffn_hidden)(tape, params, h))));
}

BackboneOutput Network::propagate_chain(Tape& tape, ParameterStore& params, std::vector<BackboneOutput> chain) const {
  // chain is oldest first; cues flow toward the most recent template.
  BackboneOutput cur = chain.front();
  for (std::size_t j = 1; j < chain.size(); ++j) {
    BackboneOutput next = chain[j];
    if (cfg_.paradigm == Paradigm::kSelfChain) {
      TemplateSearchPair hop{cur.feats, next.feats, cur.mask, next.mask, cur.cloud, next.cloud, chain.size() - j};
      const auto layers = spaceformer_.forward(tape, params, encoders_, hop, cfg_.schedule_for(1));
      next.feats = split_blocks(layers.back().feats).second;
    } else {
      next.feats = cross_attend(tape, params, cur, next);
    }
    cur = std::move(next);
  }
  return cur;
}

StepOutputs Network::forward(Tape& tape, ParameterStore& params, const StepInputs& in) const {
  if (in.templates.size() != cfg_.templates) {
    throw ContractError("expected " + std::to_string(cfg_.templates) + " templates, got " +
                        std::to_string(in.templates.size()));
  }
  const BackboneOutput search =
      backbone_.extract_features(tape, params, in.search, init_search_mask(in.search.size()), in.rng);
  std::vector<BackboneOutput> tmpl;
  for (const auto& t : in.templates) tmpl.push_back(backbone_.extract_features(tape, params, t.cloud, t.mask, in.rng));

  std::vector<std::pair<std::size_t, BackboneOutput>> pair_inputs;
  if (cfg_.paradigm == Paradigm::kManyToOne || tmpl.size() == 1) {
    for (std::size_t j = 0; j < tmpl.size(); ++j) pair_inputs.emplace_back(j, tmpl[j]);
  } else {
    std::vector<BackboneOutput> chain(tmpl.rbegin(), tmpl.rend());
    pair_inputs.emplace_back(0, propagate_chain(tape, params, std::move(chain)));
  }

  StepOutputs out;
  const std::size_t n = search.cloud.size();
  for (auto& [j, t] : pair_inputs) {
    TemplateSearchPair pair{t.feats,  search.feats, t.mask, init_search_mask(n),
                            t.cloud,  search.cloud, j + 1};
    PairOutputs po;
    po.template_index = j + 1;
    po.layers = spaceformer_.forward(tape, params, encoders_, pair, cfg_.schedule_for(j + 1));
    po.template_coords = t.cloud;
    po.search_coords = search.cloud;
    po.template_mask = t.mask;
    po.template_box = in.templates[j].box;
    const LayerOutput& last = po.layers.back();
    po.locator = locator_.propose(tape, params, split_blocks(last.feats).second,
                                  split_blocks(last.center_pred).second, split_blocks(last.mask_pred).second,
                                  in.target_size, j + 1);
    out.pairs.push_back(std::move(po));
  }
  return out;
}

}  // namespace m3sot
