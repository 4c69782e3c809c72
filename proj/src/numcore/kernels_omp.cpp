#include <omp.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <utility>
#include <vector>

#include "m3sot/kernels.hpp"

namespace m3sot::kernels {

namespace {

// Below this many multiply-adds the fork/join overhead dominates.
constexpr std::size_t kParallelWork = 1u << 15;

}  // namespace

int max_threads() {
  static const int threads = [] {
    int t = omp_get_max_threads();
    if (const char* env = std::getenv("M3SOT_THREADS")) {
      const int cap = std::atoi(env);
      if (cap > 0) t = std::min(t, cap);
    }
    return std::max(t, 1);
  }();
  return threads;
}

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
            std::size_t k, std::size_t n) {
  const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static) if (m * k * n > kParallelWork) num_threads(max_threads())
  for (std::ptrdiff_t ii = 0; ii < rows; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    double* crow = c.data() + i * n;
    std::fill(crow, crow + n, 0.0);
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      const double* brow = b.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void matmul_nt(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
               std::size_t k, std::size_t n) {
  const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static) if (m * k * n > kParallelWork) num_threads(max_threads())
  for (std::ptrdiff_t ii = 0; ii < rows; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    const double* arow = a.data() + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = b.data() + j * k;
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      c[i * n + j] = acc;
    }
  }
}

void matmul_tn_acc(std::span<const double> a, std::span<const double> b, std::span<double> c,
                   std::size_t m, std::size_t k, std::size_t n) {
  const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel if (m * k * n > kParallelWork) num_threads(max_threads())
  {
    std::vector<double> tmp(n);
#pragma omp for schedule(static)
    for (std::ptrdiff_t ii = 0; ii < rows; ++ii) {
      const auto i = static_cast<std::size_t>(ii);
      std::fill(tmp.begin(), tmp.end(), 0.0);
      for (std::size_t p = 0; p < k; ++p) {
        const double av = a[p * m + i];
        if (av == 0.0) continue;
        const double* brow = b.data() + p * n;
        for (std::size_t j = 0; j < n; ++j) tmp[j] += av * brow[j];
      }
      double* crow = c.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += tmp[j];
    }
  }
}

void knn(std::span<const double> xyz, std::size_t n, std::size_t k, std::span<std::uint32_t> out) {
  const auto rows = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel if (n * n > kParallelWork) num_threads(max_threads())
  {
    std::vector<std::pair<double, std::uint32_t>> order(n);
#pragma omp for schedule(static)
    for (std::ptrdiff_t ii = 0; ii < rows; ++ii) {
      const auto i = static_cast<std::size_t>(ii);
      const double xi = xyz[3 * i], yi = xyz[3 * i + 1], zi = xyz[3 * i + 2];
      for (std::size_t j = 0; j < n; ++j) {
        const double dx = xyz[3 * j] - xi;
        const double dy = xyz[3 * j + 1] - yi;
        const double dz = xyz[3 * j + 2] - zi;
        order[j] = {dx * dx + dy * dy + dz * dz, static_cast<std::uint32_t>(j)};
      }
      std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end());
      for (std::size_t q = 0; q < k; ++q) out[i * k + q] = order[q].second;
    }
  }
}

void edge_max(std::span<const double> a, std::span<const double> b, std::span<const std::uint32_t> nbr,
              std::size_t n, std::size_t channels, std::size_t k, std::span<double> out,
              std::span<std::uint32_t> arg) {
  const auto rows = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static) if (n * channels * k > kParallelWork) num_threads(max_threads())
  for (std::ptrdiff_t ii = 0; ii < rows; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    double* orow = out.data() + i * channels;
    std::uint32_t* arow = arg.data() + i * channels;
    const double* arow_in = a.data() + i * channels;
    std::fill(orow, orow + channels, -std::numeric_limits<double>::infinity());
    for (std::size_t q = 0; q < k; ++q) {
      const std::uint32_t j = nbr[i * k + q];
      const double* brow = b.data() + static_cast<std::size_t>(j) * channels;
      for (std::size_t c = 0; c < channels; ++c) {
        const double v = arow_in[c] + brow[c];
        if (v > orow[c]) {
          orow[c] = v;
          arow[c] = j;
        }
      }
    }
  }
}

void softmax_rows(std::span<const double> x, std::span<double> y, std::size_t rows, std::size_t cols) {
  const auto nrows = static_cast<std::ptrdiff_t>(rows);
#pragma omp parallel for schedule(static) if (rows * cols > kParallelWork) num_threads(max_threads())
  for (std::ptrdiff_t rr = 0; rr < nrows; ++rr) {
    const auto r = static_cast<std::size_t>(rr);
    const double* in = x.data() + r * cols;
    double* o = y.data() + r * cols;
    double mx = in[0];
    for (std::size_t c = 1; c < cols; ++c) mx = std::max(mx, in[c]);
    double sum = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      o[c] = std::exp(in[c] - mx);
      sum += o[c];
    }
    for (std::size_t c = 0; c < cols; ++c) o[c] /= sum;
  }
}

}  // namespace m3sot::kernels
