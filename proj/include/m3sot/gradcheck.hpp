#pragma once

#include <functional>

#include "m3sot/params.hpp"
#include "m3sot/tape.hpp"

namespace m3sot {

/// Scalar function of one input, recorded on the given tape.
using ScalarFn = std::function<Var(Tape&, const Var& x)>;
/// Scalar function whose inputs are the parameters of a store.
using ParamLossFn = std::function<Var(Tape&)>;

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::size_t checked = 0;
  /// Coordinates whose ±eps probes fall on a different branch of a piecewise
  /// op (relu, max, clamp, argmax); central differences are no oracle there.
  std::size_t straddled = 0;
};

/// Max over coordinates of |analytic − central difference| / max(|a|, |b|, 1e-8).
/// The difference uses the fourth-order central stencil at ±eps, ±2eps.
GradCheckReport finite_difference_report(const ScalarFn& f, const Tensor& x, double eps = 1e-5);
double finite_difference_check(const ScalarFn& f, const Tensor& x, double eps = 1e-5);

/// Same check against every coordinate of every parameter in the store
/// (at most max_per_tensor evenly spaced coordinates per tensor when > 0).
/// The store's gradients are zeroed before and after.
GradCheckReport finite_difference_report(const ParamLossFn& f, ParameterStore& params, double eps = 1e-5,
                                         std::size_t max_per_tensor = 0);
double finite_difference_check(const ParamLossFn& f, ParameterStore& params, double eps = 1e-5,
                               std::size_t max_per_tensor = 0);

}  // namespace m3sot
