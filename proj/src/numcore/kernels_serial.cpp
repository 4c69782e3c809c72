#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>
#include <vector>

#include "m3sot/kernels.hpp"

namespace m3sot::kernels::serial {

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
            std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
      c[i * n + j] = acc;
    }
  }
}

void matmul_nt(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
               std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[j * k + p];
      c[i * n + j] = acc;
    }
  }
}

void matmul_tn_acc(std::span<const double> a, std::span<const double> b, std::span<double> c,
                   std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += a[p * m + i] * b[p * n + j];
      c[i * n + j] += acc;
    }
  }
}

void knn(std::span<const double> xyz, std::size_t n, std::size_t k, std::span<std::uint32_t> out) {
  std::vector<std::pair<double, std::uint32_t>> order(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double dx = xyz[3 * j] - xyz[3 * i];
      const double dy = xyz[3 * j + 1] - xyz[3 * i + 1];
      const double dz = xyz[3 * j + 2] - xyz[3 * i + 2];
      order[j] = {dx * dx + dy * dy + dz * dz, static_cast<std::uint32_t>(j)};
    }
    std::sort(order.begin(), order.end());
    for (std::size_t q = 0; q < k; ++q) out[i * k + q] = order[q].second;
  }
}

void edge_max(std::span<const double> a, std::span<const double> b, std::span<const std::uint32_t> nbr,
              std::size_t n, std::size_t channels, std::size_t k, std::span<double> out,
              std::span<std::uint32_t> arg) {
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < channels; ++c) {
      double best = -std::numeric_limits<double>::infinity();
      std::uint32_t best_j = 0;
      for (std::size_t q = 0; q < k; ++q) {
        const std::uint32_t j = nbr[i * k + q];
        const double v = a[i * channels + c] + b[j * channels + c];
        if (v > best) {
          best = v;
          best_j = j;
        }
      }
      out[i * channels + c] = best;
      arg[i * channels + c] = best_j;
    }
  }
}

void softmax_rows(std::span<const double> x, std::span<double> y, std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
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

}  // namespace m3sot::kernels::serial
