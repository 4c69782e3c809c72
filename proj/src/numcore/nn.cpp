#include "m3sot/nn.hpp"

#include "m3sot/ops.hpp"

namespace m3sot::nn {

Linear Linear::create(ParameterStore& params, std::string prefix, std::size_t in, std::size_t out,
                      std::mt19937_64& rng, bool bias) {
  params.add_uniform(prefix + ".w", Shape{in, out}, in, rng);
  if (bias) params.add_uniform(prefix + ".b", Shape{out}, in, rng);
  return Linear{std::move(prefix), in, out, bias};
}

Var Linear::operator()(Tape& tape, ParameterStore& params, const Var& x) const {
  Var y = ops::matmul(x, tape.leaf(params.at(prefix + ".w")));
  if (!bias) return y;
  return ops::add_bias(y, tape.leaf(params.at(prefix + ".b")));
}

LayerNorm LayerNorm::create(ParameterStore& params, std::string prefix, std::size_t channels) {
  params.add(prefix + ".gamma", Tensor(Shape{channels}, 1.0));
  params.add(prefix + ".beta", Tensor(Shape{channels}, 0.0));
  return LayerNorm{std::move(prefix), channels};
}

Var LayerNorm::operator()(Tape& tape, ParameterStore& params, const Var& x) const {
  return ops::layer_norm(x, tape.leaf(params.at(prefix + ".gamma")), tape.leaf(params.at(prefix + ".beta")));
}

Mlp3 Mlp3::create(ParameterStore& params, const std::string& prefix, std::size_t in, std::size_t hidden,
                  std::size_t out, std::mt19937_64& rng) {
  Mlp3 m;
  m.l1 = Linear::create(params, prefix + ".l1", in, hidden, rng);
  m.n1 = LayerNorm::create(params, prefix + ".n1", hidden);
  m.l2 = Linear::create(params, prefix + ".l2", hidden, hidden, rng);
  m.n2 = LayerNorm::create(params, prefix + ".n2", hidden);
  m.l3 = Linear::create(params, prefix + ".l3", hidden, out, rng);
  return m;
}

Var Mlp3::operator()(Tape& tape, ParameterStore& params, const Var& x) const {
  Var h = ops::relu(n1(tape, params, l1(tape, params, x)));
  h = ops::relu(n2(tape, params, l2(tape, params, h)));
  return l3(tape, params, h);
}

}  // namespace m3sot::nn
