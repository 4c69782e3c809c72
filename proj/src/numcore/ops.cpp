#include "m3sot/ops.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>

#include "m3sot/errors.hpp"
#include "m3sot/kernels.hpp"

namespace m3sot::ops {

namespace {

void require_matrix(const Var& x, const char* op) {
  if (x.value().rank() != 2) {
    throw DimensionError(std::string(op) + ": expected a matrix, got " + shape_str(x.shape()));
  }
}

void require_same(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

void require_vector(const Var& v, std::size_t n, const char* op) {
  if (v.numel() != n) {
    throw DimensionError(std::string(op) + ": expected " + std::to_string(n) + " values, got " +
                         shape_str(v.shape()));
  }
}

void add_into(std::span<double> dst, std::span<const double> src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

template <typename F>
Var unary(const Var& x, F&& f, Tape::BackwardFn fn) {
  Tensor out(x.shape());
  const auto in = x.value().data();
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = f(in[i]);
  return x.tape()->record(std::move(out), {x}, std::move(fn));
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw DimensionError("matmul: inner dimensions disagree " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
  }
  Tensor out(Shape{m, n});
  kernels::matmul(a.value().data(), b.value().data(), out.data(), m, k, n);
  return a.tape()->record(std::move(out), {a, b}, [a, b, m, k, n](Tape& t, const Var& o) {
    const auto g = t.grad(o);
    if (auto ga = t.grad(a); !ga.empty()) {
      std::vector<double> tmp(m * k);
      kernels::matmul_nt(g, b.value().data(), tmp, m, n, k);
      add_into(ga, tmp);
    }
    if (auto gb = t.grad(b); !gb.empty()) kernels::matmul_tn_acc(a.value().data(), g, gb, k, m, n);
  });
}

Var matmul_nt(const Var& a, const Var& b) {
  require_matrix(a, "matmul_nt");
  require_matrix(b, "matmul_nt");
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  if (b.cols() != k) {
    throw DimensionError("matmul_nt: inner dimensions disagree " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()) + "^T");
  }
  Tensor out(Shape{m, n});
  kernels::matmul_nt(a.value().data(), b.value().data(), out.data(), m, k, n);
  return a.tape()->record(std::move(out), {a, b}, [a, b, m, k, n](Tape& t, const Var& o) {
    const auto g = t.grad(o);
    if (auto ga = t.grad(a); !ga.empty()) {
      std::vector<double> tmp(m * k);
      kernels::matmul(g, b.value().data(), tmp, m, n, k);
      add_into(ga, tmp);
    }
    if (auto gb = t.grad(b); !gb.empty()) kernels::matmul_tn_acc(g, a.value().data(), gb, n, m, k);
  });
}

Var add(const Var& a, const Var& b) {
  require_same(a, b, "add");
  Tensor out = a.value();
  out.set_requires_grad(false);
  add_into(out.data(), b.value().data());
  return a.tape()->record(std::move(out), {a, b}, [a, b](Tape& t, const Var& o) {
    const auto g = t.grad(o);
    if (auto ga = t.grad(a); !ga.empty()) add_into(ga, g);
    if (auto gb = t.grad(b); !gb.empty()) add_into(gb, g);
  });
}

Var sub(const Var& a, const Var& b) {
  require_same(a, b, "sub");
  Tensor out(a.shape());
  const auto av = a.value().data(), bv = b.value().data();
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] - bv[i];
  return a.tape()->record(std::move(out), {a, b}, [a, b](Tape& t, const Var& o) {
    const auto g = t.grad(o);
    if (auto ga = t.grad(a); !ga.empty()) add_into(ga, g);
    if (auto gb = t.grad(b); !gb.empty()) {
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  require_same(a, b, "mul");
  Tensor out(a.shape());
  const auto av = a.value().data(), bv = b.value().data();
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] * bv[i];
  return a.tape()->record(std::move(out), {a, b}, [a, b](Tape& t, const Var& o) {
    const auto g = t.grad(o);
    const auto av = a.value().data(), bv = b.value().data();
    if (auto ga = t.grad(a); !ga.empty()) {
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (auto gb = t.grad(b); !gb.empty()) {
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

Var scale(const Var& a, double s) {
  return unary(a, [s](double v) { return v * s; }, [a, s](Tape& t, const Var& o) {
    const auto g = t.grad(o);
    auto ga = t.grad(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * s;
  });
}

Var add_scalar(const Var& a, double s) {
  return unary(a, [s](double v) { return v + s; }, [a](Tape& t, const Var& o) {
    add_into(t.grad(a), t.grad(o));
  });
}

Var add_bias(const Var& x, const Var& b) {
  const std::size_t rows = x.rows(), cols = x.cols();
  require_vector(b, cols, "add_bias");
  Tensor out = x.value();
  out.set_requires_grad(false);
  const auto bv = b.value().data();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out(r, c) += bv[c];
  return x.tape()->record(std::move(out), {x, b}, [x, b, rows, cols](Tape& t, const Var& o) {
    const auto g = t.grad(o);
    if (auto gx = t.grad(x); !gx.empty()) add_into(gx, g);
    if (auto gb = t.grad(b); !gb.empty()) {
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) gb[c] += g[r * cols + c];
    }
  });
}

Var relu(const Var& x) {
  for (double v : x.value().data()) x.tape()->note_branch(v > 0.0);
  return unary(x, [](double v) { return v > 0.0 ? v : 0.0; }, [x](Tape& t, const Var& o) {
    const auto g = t.grad(o);
    const auto xv = x.value().data();
    auto gx = t.grad(x);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (xv[i] > 0.0) gx[i] += g[i];
  });
}

Var sigmoid(const Var& x) {
  return unary(
      x,
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [x](Tape& t, const Var& o) {
        const auto g = t.grad(o);
        const auto y = o.value().data();
        auto gx = t.grad(x);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * y[i] * (1.0 - y[i]);
      });
}

Var log(const Var& x) {
  return unary(x, [](double v) { return std::log(v); }, [x](Tape& t, const Var& o) {
    const auto g = t.grad(o);
    const auto xv = x.value().data();
    auto gx = t.grad(x);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] / xv[i];
  });
}

Var softmax_rows(const Var& x) {
  require_matrix(x, "softmax_rows");
  const std::size_t rows = x.rows(), cols = x.cols();
  for (double v : x.value().data()) {
    if (std::isnan(v)) throw NumericError("softmax_rows: NaN input");
  }
  Tensor out(x.shape());
  kernels::softmax_rows(x.value().data(), out.data(), rows, cols);
  return x.tape()->record(std::move(out), {x}, [x, rows, cols](Tape& t, const Var& o) {
    const auto g = t.grad(o);
    const auto y = o.value().data();
    auto gx = t.grad(x);
    for (std::size_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < cols; ++c) dot += g[r * cols + c] * y[r * cols + c];
      for (std::size_t c = 0; c < cols; ++c) gx[r * cols + c] += y[r * cols + c] * (g[r * cols + c] - dot);
    }
  });
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
  require_matrix(x, "layer_norm");
  const std::size_t rows = x.rows(), cols = x.cols();
  require_vector(gamma, cols, "layer_norm gamma");
  require_vector(beta, cols, "layer_norm beta");
  const auto xv = x.value().data();
  const auto gv = gamma.value().data(), bv = beta.value().data();
  auto xhat = std::make_shared<std::vector<double>>(rows * cols);
  auto rstd = std::make_shared<std::vector<double>>(rows);
  Tensor out(x.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    double mu = 0.0;
    for (std::size_t c = 0; c < cols; ++c) mu += xv[r * cols + c];
    mu /= static_cast<double>(cols);
    double var = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      const double d = xv[r * cols + c] - mu;
      var += d * d;
    }
    var /= static_cast<double>(cols);
    const double rs = 1.0 / std::sqrt(var + eps);
    (*rstd)[r] = rs;
    for (std::size_t c = 0; c < cols; ++c) {
      const double h = (xv[r * cols + c] - mu) * rs;
      (*xhat)[r * cols + c] = h;
      out(r, c) = h * gv[c] + bv[c];
    }
  }
  return x.tape()->record(
      std::move(out), {x, gamma, beta}, [x, gamma, beta, rows, cols, xhat, rstd](Tape& t, const Var& o) {
        const auto g = t.grad(o);
        const auto gv = gamma.value().data();
        if (auto gg = t.grad(gamma); !gg.empty()) {
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) gg[c] += g[r * cols + c] * (*xhat)[r * cols + c];
        }
        if (auto gb = t.grad(beta); !gb.empty()) {
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) gb[c] += g[r * cols + c];
        }
        if (auto gx = t.grad(x); !gx.empty()) {
          const double inv = 1.0 / static_cast<double>(cols);
          for (std::size_t r = 0; r < rows; ++r) {
            double m1 = 0.0, m2 = 0.0;
            for (std::size_t c = 0; c < cols; ++c) {
              const double dh = g[r * cols + c] * gv[c];
              m1 += dh;
              m2 += dh * (*xhat)[r * cols + c];
            }
            m1 *= inv;
            m2 *= inv;
            for (std::size_t c = 0; c < cols; ++c) {
              const double dh = g[r * cols + c] * gv[c];
              gx[r * cols + c] += (*rstd)[r] * (dh - m1 - (*xhat)[r * cols + c] * m2);
            }
          }
        }
      });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw ContractError("concat_rows: no inputs");
  const std::size_t cols = parts.front().cols();
  std::size_t rows = 0;
  for (const Var& p : parts) {
    require_matrix(p, "concat_rows");
    if (p.cols() != cols) {
      throw DimensionError("concat_rows: column mismatch " + shape_str(parts.front().shape()) + " vs " +
                           shape_str(p.shape()));
    }
    rows += p.rows();
  }
  Tensor out(Shape{rows, cols});
  std::size_t off = 0;
  for (const Var& p : parts) {
    const auto v = p.value().data();
    std::copy(v.begin(), v.end(), out.data().begin() + static_cast<std::ptrdiff_t>(off));
    off += v.size();
  }
  return parts.front().tape()->record(std::move(out), parts, [parts](Tape& t, const Var& o) {
    const auto g = t.grad(o);
    std::size_t off = 0;
    for (const Var& p : parts) {
      const std::size_t n = p.numel();
      if (auto gp = t.grad(p); !gp.empty()) add_into(gp, g.subspan(off, n));
      off += n;
    }
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ContractError("concat_cols: no inputs");
  const std::size_t rows = parts.front().rows();
  std::size_t cols = 0;
  for (const Var& p : parts) {
    require_matrix(p, "concat_cols");
    if (p.rows() != rows) {
      throw DimensionError("concat_cols: row mismatch " + shape_str(parts.front().shape()) + " vs " +
                           shape_str(p.shape()));
    }
    cols += p.cols();
  }
  Tensor out(Shape{rows, cols});
  std::size_t c0 = 0;
  for (const Var& p : parts) {
    const std::size_t pc = p.cols();
    const Tensor& v = p.value();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < pc; ++c) out(r, c0 + c) = v(r, c);
    c0 += pc;
  }
  return parts.front().tape()->record(std::move(out), parts, [parts, rows, cols](Tape& t, const Var& o) {
    const auto g = t.grad(o);
    std::size_t c0 = 0;
    for (const Var& p : parts) {
      const std::size_t pc = p.cols();
      if (auto gp = t.grad(p); !gp.empty()) {
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < pc; ++c) gp[r * pc + c] += g[r * cols + c0 + c];
      }
      c0 += pc;
    }
  });
}

Var slice_rows(const Var& x, std::size_t begin, std::size_t end) {
  require_matrix(x, "slice_rows");
  if (begin > end || end > x.rows()) {
    throw DimensionError("slice_rows: range [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") outside " + shape_str(x.shape()));
  }
  const std::size_t cols = x.cols();
  const auto v = x.value().data().subspan(begin * cols, (end - begin) * cols);
  Tensor out(Shape{end - begin, cols}, std::vector<double>(v.begin(), v.end()));
  return x.tape()->record(std::move(out), {x}, [x, begin, cols](Tape& t, const Var& o) {
    const auto g = t.grad(o);
    add_into(t.grad(x).subspan(begin * cols, g.size()), g);
  });
}

Var slice_cols(const Var& x, std::size_t begin, std::size_t end) {
  require_matrix(x, "slice_cols");
  if (begin > end || end > x.cols()) {
    throw DimensionError("slice_cols: range [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") outside " + shape_str(x.shape()));
  }
  const std::size_t rows = x.rows(), cols = x.cols(), w = end - begin;
  Tensor out(Shape{rows, w});
  const Tensor& v = x.value();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < w; ++c) out(r, c) = v(r, begin + c);
  return x.tape()->record(std::move(out), {x}, [x, begin, rows, cols, w](Tape& t, const Var& o) {
    const auto g = t.grad(o);
    auto gx = t.grad(x);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < w; ++c) gx[r * cols + begin + c] += g[r * w + c];
  });
}

Var gather_rows(const Var& x, std::span<const std::uint32_t> indices) {
  require_matrix(x, "gather_rows");
  const std::size_t cols = x.cols();
  Tensor out(Shape{indices.size(), cols});
  const auto v = x.value().data();
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] >= x.rows()) throw DimensionError("gather_rows: index out of range");
    std::copy_n(v.begin() + static_cast<std::ptrdiff_t>(indices[r] * cols), cols,
                out.data().begin() + static_cast<std::ptrdiff_t>(r * cols));
  }
  std::vector<std::uint32_t> idx(indices.begin(), indices.end());
  return x.tape()->record(std::move(out), {x}, [x, idx = std::move(idx), cols](Tape& t, const Var& o) {
    const auto g = t.grad(o);
    auto gx = t.grad(x);
    for (std::size_t r = 0; r < idx.size(); ++r)
      for (std::size_t c = 0; c < cols; ++c) gx[idx[r] * cols + c] += g[r * cols + c];
  });
}

Var edge_max(const Var& a, const Var& b, std::span<const std::uint32_t> neighbors, std::size_t k) {
  require_same(a, b, "edge_max");
  const std::size_t n = a.rows(), ch = a.cols();
  if (neighbors.size() != n * k) throw DimensionError("edge_max: neighbor table must be N x k");
  for (std::uint32_t j : neighbors) {
    if (j >= n) throw DimensionError("edge_max: neighbor index out of range");
  }
  Tensor out(Shape{n, ch});
  auto arg = std::make_shared<std::vector<std::uint32_t>>(n * ch);
  kernels::edge_max(a.value().data(), b.value().data(), neighbors, n, ch, k, out.data(), *arg);
  for (std::uint32_t j : *arg) a.tape()->note_branch(j);
  return a.tape()->record(std::move(out), {a, b}, [a, b, arg, n, ch](Tape& t, const Var& o) {
    const auto g = t.grad(o);
    if (auto ga = t.grad(a); !ga.empty()) add_into(ga, g);
    if (auto gb = t.grad(b); !gb.empty()) {
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < ch; ++c) gb[(*arg)[i * ch + c] * ch + c] += g[i * ch + c];
    }
  });
}

Var sum(const Var& x) {
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  return x.tape()->record(Tensor::scalar(s), {x}, [x](Tape& t, const Var& o) {
    const double g = t.grad(o)[0];
    for (double& v : t.grad(x)) v += g;
  });
}

Var mean(const Var& x) {
  const auto n = static_cast<double>(x.numel());
  if (x.numel() == 0) throw ContractError("mean of an empty tensor");
  return scale(sum(x), 1.0 / n);
}

Var huber(const Var& x, double delta) {
  for (double v : x.value().data()) x.tape()->note_branch(v < -delta ? 0 : (v > delta ? 2 : 1));
  return unary(
      x,
      [delta](double v) {
        const double a = std::abs(v);
        return a <= delta ? 0.5 * v * v : delta * (a - 0.5 * delta);
      },
      [x, delta](Tape& t, const Var& o) {
        const auto g = t.grad(o);
        const auto xv = x.value().data();
        auto gx = t.grad(x);
        for (std::size_t i = 0; i < g.size(); ++i) {
          const double v = xv[i];
          const double d = std::abs(v) <= delta ? v : (v > 0.0 ? delta : -delta);
          gx[i] += g[i] * d;
        }
      });
}

Var bce(const Var& p, std::span<const double> target, double eps) {
  if (target.size() != p.numel()) {
    throw DimensionError("bce: " + std::to_string(target.size()) + " targets for " + shape_str(p.shape()));
  }
  const auto pv = p.value().data();
  const auto n = static_cast<double>(pv.size());
  double loss = 0.0;
  for (std::size_t i = 0; i < pv.size(); ++i) {
    p.tape()->note_branch(pv[i] < eps || pv[i] > 1.0 - eps);
    const double q = std::clamp(pv[i], eps, 1.0 - eps);
    loss -= target[i] * std::log(q) + (1.0 - target[i]) * std::log(1.0 - q);
  }
  std::vector<double> tgt(target.begin(), target.end());
  return p.tape()->record(Tensor::scalar(loss / n), {p}, [p, tgt = std::move(tgt), eps, n](Tape& t, const Var& o) {
    const double g = t.grad(o)[0] / n;
    const auto pv = p.value().data();
    auto gp = t.grad(p);
    for (std::size_t i = 0; i < pv.size(); ++i) {
      const double q = pv[i];
      if (q < eps || q > 1.0 - eps) continue;
      gp[i] += g * (-tgt[i] / q + (1.0 - tgt[i]) / (1.0 - q));
    }
  });
}

}  // namespace m3sot::ops
