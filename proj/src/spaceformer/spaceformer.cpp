#include "m3sot/spaceformer.hpp"

#include <cmath>

#include "m3sot/errors.hpp"
#include "m3sot/ops.hpp"

namespace m3sot {

HeadSchedule HeadSchedule::fixed(std::size_t layers) {
  if (layers < 1) throw ConfigError("head schedule needs at least one layer");
  return HeadSchedule{std::vector<std::size_t>(layers, 1)};
}

HeadSchedule HeadSchedule::variable(std::size_t layers, std::size_t channels) {
  if (layers < 1) throw ConfigError("head schedule needs at least one layer");
  if (channels < 1) throw ConfigError("channel count must be >= 1");
  std::size_t cap = 1;
  while (channels % (cap * 2) == 0) cap *= 2;
  HeadSchedule s;
  std::size_t h = 1;
  for (std::size_t l = 0; l < layers; ++l) {
    s.layer_heads.push_back(std::min(h, cap));
    if (h < cap) h *= 2;
  }
  return s;
}

HeadSchedule HeadSchedule::make(std::size_t layers, std::size_t channels, HeadMode mode) {
  return mode == HeadMode::kFixed ? fixed(layers) : variable(layers, channels);
}

void HeadSchedule::validate(std::size_t channels) const {
  if (layer_heads.empty()) throw ConfigError("head schedule is empty");
  for (std::size_t h : layer_heads) {
    if (h < 1 || channels % h != 0) {
      throw ConfigError(std::to_string(h) + " heads do not divide " + std::to_string(channels) + " channels");
    }
  }
}

std::vector<Var> multi_head_attention(const Var& q, const Var& k, const std::vector<Var>& values,
                                      std::size_t heads) {
  const std::size_t c = q.cols();
  if (heads < 1 || c % heads != 0) {
    throw ConfigError(std::to_string(heads) + " heads do not divide " + std::to_string(c) + " channels");
  }
  const std::size_t dh = c / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<std::vector<Var>> per_value(values.size());
  for (std::size_t h = 0; h < heads; ++h) {
    const Var qh = heads == 1 ? q : ops::slice_cols(q, h * dh, (h + 1) * dh);
    const Var kh = heads == 1 ? k : ops::slice_cols(k, h * dh, (h + 1) * dh);
    const Var attn = ops::softmax_rows(ops::scale(ops::matmul_nt(qh, kh), scale));
    for (std::size_t v = 0; v < values.size(); ++v) {
      const Var vh = heads == 1 ? values[v] : ops::slice_cols(values[v], h * dh, (h + 1) * dh);
      per_value[v].push_back(ops::matmul(attn, vh));
    }
  }
  std::vector<Var> out;
  for (auto& parts : per_value) out.push_back(parts.size() == 1 ? parts.front() : ops::concat_cols(parts));
  return out;
}

std::pair<Var, Var> split_blocks(const Var& x) {
  const std::size_t rows = x.rows();
  if (rows % 2 != 0) throw DimensionError("split_blocks: odd row count " + std::to_string(rows));
  return {ops::slice_rows(x, 0, rows / 2), ops::slice_rows(x, rows / 2, rows)};
}

void SpaceFormer::init(ParameterStore& params, std::mt19937_64& rng) const {
  const std::size_t c = cfg_.channels;
  for (std::size_t l = 0; l < cfg_.layers; ++l) {
    const std::string p = layer_prefix(l);
    nn::LayerNorm::create(params, p + ".ln1", c);
    nn::Linear::create(params, p + ".q", c, c, rng);
    nn::Linear::create(params, p + ".k", c, c, rng, false);
    nn::Linear::create(params, p + ".v", c, c, rng);
    nn::Linear::create(params, p + ".v_me", c, c, rng);
    nn::Linear::create(params, p + ".out", c, c, rng);
    nn::Linear::create(params, p + ".out_me", c, c, rng);
    nn::LayerNorm::create(params, p + ".ln2", c);
    nn::Linear::create(params, p + ".ffn1", c, cfg_.ffn_hidden, rng);
    nn::Linear::create(params, p + ".ffn2", cfg_.ffn_hidden, c, rng);
    nn::Mlp3::create(params, p + ".mask_head", c, cfg_.head_hidden, 1, rng);
    nn::Mlp3::create(params, p + ".center_head", c, cfg_.head_hidden, 3, rng);
  }
}

GeoInputs SpaceFormer::geoformer_concat(Tape& tape, ParameterStore& params, const PointEncoders& enc,
                                        const TemplateSearchPair& pair) const {
  const std::size_t n = pair.template_coords.size();
  if (pair.search_coords.size() != n || pair.template_feats.rows() != n || pair.search_feats.rows() != n ||
      pair.template_mask.size() != n || pair.search_mask.size() != n) {
    throw ContractError("template and search blocks must share the point count");
  }
  if (pair.template_feats.cols() != pair.search_feats.cols()) {
    throw ContractError("template and search blocks must share the channel count");
  }
  GeoInputs in;
  in.feats = ops::concat_rows({pair.template_feats, pair.search_feats});
  in.coords = pair.template_coords;
  in.coords.points.insert(in.coords.points.end(), pair.search_coords.points.begin(),
                          pair.search_coords.points.end());
  in.mask = pair.template_mask;
  in.mask.values.insert(in.mask.values.end(), pair.search_mask.values.begin(), pair.search_mask.values.end());
  in.pe = enc.positional_encoding(tape, params, in.coords);
  in.me = enc.mask_encoding(tape, params, in.mask);
  return in;
}

Var SpaceFormer::space_attention_layer(Tape& tape, ParameterStore& params, std::size_t layer, const Var& feats,
                                       const Var& pe, const Var& me, std::size_t heads) const {
  const std::size_t c = feats.cols();
  if (heads < 1 || c % heads != 0) {
    throw ConfigError(std::to_string(heads) + " heads do not divide " + std::to_string(c) + " channels");
  }
  const std::string p = layer_prefix(layer);
  auto lin = [&](const char* name, std::size_t in, std::size_t out) { return nn::Linear{p + name, in, out}; };

  const Var normed = nn::LayerNorm{p + ".ln1", c}(tape, params, feats);
  const Var qk = ops::add(normed, pe);
  const Var q = lin(".q", c, c)(tape, params, qk);
  const Var k = nn::Linear{p + ".k", c, c, false}(tape, params, qk);
  const Var v = lin(".v", c, c)(tape, params, normed);
  const Var v_me = lin(".v_me", c, c)(tape, params, me);
  const auto attended = multi_head_attention(q, k, {v, v_me}, heads);
  Var y = ops::add(feats, lin(".out", c, c)(tape, params, attended[0]));
  y = ops::add(y, lin(".out_me", c, c)(tape, params, attended[1]));

  const Var h = nn::LayerNorm{p + ".ln2", c}(tape, params, y);
  const Var ffn = lin(".ffn2", cfg_.ffn_hidden, c)(tape, params,
                                                   ops::relu(lin(".ffn1", c, cfg_.ffn_hidden)(tape, params, h)));
  return ops::add(y, ffn);
}

std::pair<Var, Var> SpaceFormer::predict_layer_heads(Tape& tape, ParameterStore& params, std::size_t layer,
                                                     const Var& feats, const PointCloud& coords) const {
  const std::string p = layer_prefix(layer);
  const std::size_t c = feats.cols(), hid = cfg_.head_hidden;
  auto mlp = [&](const std::string& name, std::size_t out) {
    return nn::Mlp3{nn::Linear{name + ".l1", c, hid}, nn::Linear{name + ".l2", hid, hid},
                    nn::Linear{name + ".l3", hid, out}, nn::LayerNorm{name + ".n1", hid},
                    nn::LayerNorm{name + ".n2", hid}};
  };
  if (coords.size() != feats.rows()) throw DimensionError("center head: coordinate/feature row mismatch");
  const Var mask = ops::sigmoid(mlp(p + ".mask_head", 1)(tape, params, feats));
  const Var offset = mlp(p + ".center_head", 3)(tape, params, feats);
  const Var center = ops::add(offset, cloud_var(tape, coords));
  return {mask, center};
}

std::vector<LayerOutput> SpaceFormer::forward(Tape& tape, ParameterStore& params, const PointEncoders& enc,
                                              const TemplateSearchPair& pair, const HeadSchedule& schedule) const {
  return forward(tape, params, geoformer_concat(tape, params, enc, pair), schedule);
}

std::vector<LayerOutput> SpaceFormer::forward(Tape& tape, ParameterStore& params, const GeoInputs& in,
                                              const HeadSchedule& schedule) const {
  schedule.validate(in.feats.cols());
  if (schedule.layers() > cfg_.layers) {
    throw ConfigError("schedule has " + std::to_string(schedule.layers()) + " layers, model has " +
                      std::to_string(cfg_.layers));
  }
  std::vector<LayerOutput> outs;
  Var x = in.feats;
  for (std::size_t l = 0; l < schedule.layers(); ++l) {
    x = space_attention_layer(tape, params, l, x, in.pe, in.me, schedule.layer_heads[l]);
    auto [mask, center] = predict_layer_heads(tape, params, l, x, in.coords);
    outs.push_back(LayerOutput{x, mask, center});
  }
  return outs;
}

}  // namespace m3sot
