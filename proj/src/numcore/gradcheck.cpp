#include "m3sot/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace m3sot {

namespace {

double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8}); }

struct Eval {
  double value;
  std::uint64_t branches;
};

// Probes one coordinate with the fourth-order central stencil and folds the
// result into `r`.
template <typename F>
void probe_coordinate(double& slot, double eps, double analytic, std::uint64_t base, F&& eval, GradCheckReport& r) {
  const double orig = slot;
  Eval e[4];
  const double offsets[4] = {2.0, 1.0, -1.0, -2.0};
  for (int i = 0; i < 4; ++i) {
    slot = orig + offsets[i] * eps;
    e[i] = eval();
  }
  slot = orig;
  for (const Eval& v : e) {
    if (v.branches != base) {
      ++r.straddled;
      return;
    }
  }
  ++r.checked;
  const double fd = (8.0 * (e[1].value - e[2].value) - (e[0].value - e[3].value)) / (12.0 * eps);
  r.max_rel_err = std::max(r.max_rel_err, rel_err(analytic, fd));
}

}  // namespace

GradCheckReport finite_difference_report(const ScalarFn& f, const Tensor& x, double eps) {
  Tensor input(x.shape(), std::vector<double>(x.data().begin(), x.data().end()));
  input.set_requires_grad(true);
  std::vector<double> analytic;
  std::uint64_t base = 0;
  {
    Tape tape;
    Var xv = tape.leaf(input);
    const Var y = f(tape, xv);
    base = tape.branch_signature();
    tape.backward(y);
    analytic.assign(input.grad().begin(), input.grad().end());
  }
  Tensor probe(x.shape(), std::vector<double>(x.data().begin(), x.data().end()));
  auto eval = [&] {
    Tensor copy(probe.shape(), std::vector<double>(probe.data().begin(), probe.data().end()));
    Tape tape;
    const double v = f(tape, tape.leaf(copy)).item();
    return Eval{v, tape.branch_signature()};
  };
  GradCheckReport r;
  for (std::size_t i = 0; i < probe.numel(); ++i) probe_coordinate(probe[i], eps, analytic[i], base, eval, r);
  return r;
}

double finite_difference_check(const ScalarFn& f, const Tensor& x, double eps) {
  return finite_difference_report(f, x, eps).max_rel_err;
}

GradCheckReport finite_difference_report(const ParamLossFn& f, ParameterStore& params, double eps,
                                         std::size_t max_per_tensor) {
  params.zero_grad();
  std::uint64_t base = 0;
  {
    Tape tape;
    const Var y = f(tape);
    base = tape.branch_signature();
    tape.backward(y);
  }
  auto eval = [&] {
    Tape tape;
    const double v = f(tape).item();
    return Eval{v, tape.branch_signature()};
  };
  GradCheckReport r;
  for (auto& [name, p] : params) {
    if (!p.requires_grad()) continue;
    const std::size_t n = p.numel();
    const std::size_t count = (max_per_tensor == 0 || max_per_tensor >= n) ? n : max_per_tensor;
    std::vector<double> analytic(n, 0.0);
    if (p.has_grad()) analytic.assign(p.grad().begin(), p.grad().end());
    for (std::size_t q = 0; q < count; ++q) {
      const std::size_t i = count == n ? q : q * n / count;
      probe_coordinate(p[i], eps, analytic[i], base, eval, r);
    }
  }
  params.zero_grad();
  return r;
}

double finite_difference_check(const ParamLossFn& f, ParameterStore& params, double eps,
                               std::size_t max_per_tensor) {
  return finite_difference_report(f, params, eps, max_per_tensor).max_rel_err;
}

}  // namespace m3sot
