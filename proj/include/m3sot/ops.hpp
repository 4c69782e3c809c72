#pragma once

// Differentiable operations over Tape values. Matrices are rank-2 row-major;
// bias/gamma/beta vectors are rank-1 of the column count.

#include <cstdint>
#include <span>
#include <vector>

#include "m3sot/tape.hpp"

namespace m3sot::ops {

Var matmul(const Var& a, const Var& b);
/// a · bᵀ
Var matmul_nt(const Var& a, const Var& b);

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
/// x[N×C] + b[C] broadcast over rows.
Var add_bias(const Var& x, const Var& b);

/// Subgradient at 0 is 0.
Var relu(const Var& x);
Var sigmoid(const Var& x);
Var log(const Var& x);

Var softmax_rows(const Var& x);
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);

Var concat_rows(const std::vector<Var>& parts);
Var concat_cols(const std::vector<Var>& parts);
Var slice_rows(const Var& x, std::size_t begin, std::size_t end);
Var slice_cols(const Var& x, std::size_t begin, std::size_t end);
/// Rows of x at the given indices (duplicates allowed).
Var gather_rows(const Var& x, std::span<const std::uint32_t> indices);

/// out[i,c] = max_j (a[i,c] + b[nbr[i,j],c]) over the k neighbors of i.
Var edge_max(const Var& a, const Var& b, std::span<const std::uint32_t> neighbors, std::size_t k);

Var sum(const Var& x);
Var mean(const Var& x);
/// Elementwise Huber with transition at delta (quadratic 0.5·x² inside).
Var huber(const Var& x, double delta = 1.0);
/// Mean binary cross entropy of probabilities p against targets, with p
/// clamped to [eps, 1 − eps]; clamped entries pass no gradient.
Var bce(const Var& p, std::span<const double> target, double eps = 1e-7);

}  // namespace m3sot::ops

namespace m3sot {

inline Var operator+(const Var& a, const Var& b) { return ops::add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return ops::sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return ops::mul(a, b); }
inline Var operator*(const Var& a, double s) { return ops::scale(a, s); }
inline Var operator*(double s, const Var& a) { return ops::scale(a, s); }

}  // namespace m3sot
