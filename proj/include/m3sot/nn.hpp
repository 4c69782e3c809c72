#pragma once

#include <random>
#include <string>

#include "m3sot/params.hpp"
#include "m3sot/tape.hpp"

namespace m3sot::nn {

/// y = x·W + b with W stored as [in×out] under "<prefix>.w" and b as "<prefix>.b".
/// Without bias only "<prefix>.w" exists.
struct Linear {
  std::string prefix;
  std::size_t in = 0;
  std::size_t out = 0;
  bool bias = true;

  static Linear create(ParameterStore& params, std::string prefix, std::size_t in, std::size_t out,
                       std::mt19937_64& rng, bool bias = true);
  Var operator()(Tape& tape, ParameterStore& params, const Var& x) const;
};

/// Per-row normalization with learned scale ("<prefix>.gamma") and shift ("<prefix>.beta").
struct LayerNorm {
  std::string prefix;
  std::size_t channels = 0;

  static LayerNorm create(ParameterStore& params, std::string prefix, std::size_t channels);
  Var operator()(Tape& tape, ParameterStore& params, const Var& x) const;
};

/// Three linear layers; the first two are followed by row normalization and ReLU.
struct Mlp3 {
  Linear l1, l2, l3;
  LayerNorm n1, n2;

  static Mlp3 create(ParameterStore& params, const std::string& prefix, std::size_t in, std::size_t hidden,
                     std::size_t out, std::mt19937_64& rng);
  Var operator()(Tape& tape, ParameterStore& params, const Var& x) const;
};

}  // namespace m3sot::nn
