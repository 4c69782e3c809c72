#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "m3sot/tensor.hpp"

namespace m3sot {

/// Named learnable tensors. Iteration and serialization follow name order.
///
/// Checkpoint layout (all integers little-endian):
///   "M3CKPT1\n"
///   per parameter: u32 name length, UTF-8 name, u32 rank, u32 dims…,
///                  f64 values…
class ParameterStore {
 public:
  /// Adds a parameter; throws ContractError on a duplicate name.
  Tensor& add(const std::string& name, Tensor value);
  /// Adds a weight with uniform(±sqrt(1/fan_in)) entries.
  Tensor& add_uniform(const std::string& name, Shape shape, std::size_t fan_in, std::mt19937_64& rng);

  bool contains(const std::string& name) const { return params_.count(name) != 0; }
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;

  std::size_t size() const { return params_.size(); }
  std::size_t total_values() const;
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  void zero_grad();

  std::vector<std::uint8_t> serialize() const;
  static ParameterStore deserialize(const std::vector<std::uint8_t>& bytes);
  void save(const std::filesystem::path& path) const;
  static ParameterStore load(const std::filesystem::path& path);

  /// True when names, shapes and values match exactly.
  bool same_values(const ParameterStore& other) const;

 private:
  std::map<std::string, Tensor> params_;
};

/// Adaptive-moment optimizer over every requires_grad tensor in a store.
class Adam {
 public:
  explicit Adam(double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(ParameterStore& params);
  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }
  long steps() const { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> moments_;
};

}  // namespace m3sot
