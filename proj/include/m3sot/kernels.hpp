#pragma once

// Dense inner loops used by the autodiff ops and the backbone.
//
// Every kernel exists twice: `kernels::serial` holds the plain reference
// loops, `kernels` holds the OpenMP versions that the library calls. Both
// produce bit-identical results (work is split across rows only; no
// cross-thread reductions), which the unit tests check.

#include <cstddef>
#include <cstdint>
#include <span>

namespace m3sot::kernels {

/// c[m×n] = a[m×k] · b[k×n]
void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
            std::size_t k, std::size_t n);
/// c[m×n] = a[m×k] · b[n×k]ᵀ
void matmul_nt(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
               std::size_t k, std::size_t n);
/// c[m×n] += a[k×m]ᵀ · b[k×n]
void matmul_tn_acc(std::span<const double> a, std::span<const double> b, std::span<double> c,
                   std::size_t m, std::size_t k, std::size_t n);

/// k nearest neighbors (self included) over xyz triples; ties go to the lower index.
/// out is n×k, row-major.
void knn(std::span<const double> xyz, std::size_t n, std::size_t k, std::span<std::uint32_t> out);

/// out[i,c] = max_j (a[i,c] + b[nbr[i,j],c]); arg[i,c] records the winning row of b.
void edge_max(std::span<const double> a, std::span<const double> b, std::span<const std::uint32_t> nbr,
              std::size_t n, std::size_t channels, std::size_t k, std::span<double> out,
              std::span<std::uint32_t> arg);

/// Row-wise numerically stable softmax, in place allowed (x may alias y).
void softmax_rows(std::span<const double> x, std::span<double> y, std::size_t rows, std::size_t cols);

/// Thread count the parallel kernels use; reads M3SOT_THREADS once.
int max_threads();

namespace serial {

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
            std::size_t k, std::size_t n);
void matmul_nt(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
               std::size_t k, std::size_t n);
void matmul_tn_acc(std::span<const double> a, std::span<const double> b, std::span<double> c,
                   std::size_t m, std::size_t k, std::size_t n);
void knn(std::span<const double> xyz, std::size_t n, std::size_t k, std::span<std::uint32_t> out);
void edge_max(std::span<const double> a, std::span<const double> b, std::span<const std::uint32_t> nbr,
              std::size_t n, std::size_t channels, std::size_t k, std::span<double> out,
              std::span<std::uint32_t> arg);
void softmax_rows(std::span<const double> x, std::span<double> y, std::size_t rows, std::size_t cols);

}  // namespace serial

}  // namespace m3sot::kernels
