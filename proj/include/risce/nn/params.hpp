#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "risce/error.hpp"
#include "risce/nn/conv.hpp"

namespace risce::nn {

template <class T>
struct Parameter {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<T> value;
  std::vector<T> grad;
  std::vector<T> m;  // Adam first moment
  std::vector<T> v;  // Adam second moment

  std::size_t size() const noexcept { return value.size(); }
};

/// Ordered, named collection of trainable arrays with their Adam state.
/// The Adam step counter is shared by every parameter in the store.
template <class T>
class ParamStore {
 public:
  std::size_t add(std::string name, std::vector<std::size_t> shape, std::vector<T> values) {
    std::size_t count = 1;
    for (auto d : shape) count *= d;
    if (count != values.size())
      throw InvalidArgument("ParamStore::add: '" + name + "' values do not match shape");
    for (const auto& p : params_)
      if (p.name == name) throw InvalidArgument("ParamStore::add: duplicate name '" + name + "'");
    Parameter<T> p;
    p.name = std::move(name);
    p.shape = std::move(shape);
    p.value = std::move(values);
    p.grad.assign(count, T(0));
    p.m.assign(count, T(0));
    p.v.assign(count, T(0));
    params_.push_back(std::move(p));
    return params_.size() - 1;
  }

  /// Registers a conv layer as "<name>.weight" and "<name>.bias"; returns the
  /// weight index (bias follows at +1).
  std::size_t add_conv(const std::string& name, ConvParams<T> conv) {
    const auto& s = conv.shape;
    const auto idx = add(name + ".weight", {s.out_channels, s.in_channels, s.kernel_h, s.kernel_w},
                         std::move(conv.weight));
    add(name + ".bias", {s.out_channels}, std::move(conv.bias));
    return idx;
  }

  ConvRef<T> conv_ref(std::size_t weight_index) const {
    const auto& w = params_.at(weight_index);
    const auto& b = params_.at(weight_index + 1);
    if (w.shape.size() != 4) throw InvalidArgument("conv_ref: '" + w.name + "' is not a kernel");
    return {ConvShape{w.shape[0], w.shape[1], w.shape[2], w.shape[3]}, w.value, b.value};
  }

  std::size_t size() const noexcept { return params_.size(); }
  Parameter<T>& operator[](std::size_t i) { return params_[i]; }
  const Parameter<T>& operator[](std::size_t i) const { return params_[i]; }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  std::size_t find(const std::string& name) const {
    for (std::size_t i = 0; i < params_.size(); ++i)
      if (params_[i].name == name) return i;
    throw InvalidArgument("ParamStore: no parameter named '" + name + "'");
  }

  std::size_t scalar_count() const noexcept {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.size();
    return n;
  }

  void zero_grads() {
    for (auto& p : params_) std::fill(p.grad.begin(), p.grad.end(), T(0));
  }

  double grad_norm() const {
    double s = 0.0;
    for (const auto& p : params_)
      for (const T g : p.grad) s += static_cast<double>(g) * static_cast<double>(g);
    return std::sqrt(s);
  }

  std::uint64_t step = 0;

 private:
  std::vector<Parameter<T>> params_;
};

/// He-normal kernel initialisation: weights ~ N(0, 2 / fan_in), divided in
/// variance by `damping` (10 for the last conv of a dense block); zero bias.
template <class T>
ConvParams<T> init_params(std::uint64_t seed, ConvShape shape, double damping = 1.0) {
  shape.validate();
  risce::detail::require(damping > 0.0, "init_params: damping must be positive");
  ConvParams<T> p(shape);
  std::mt19937_64 rng(seed);
  const double stddev = std::sqrt(2.0 / static_cast<double>(shape.fan_in()) / damping);
  std::normal_distribution<double> normal(0.0, stddev);
  for (auto& w : p.weight) w = static_cast<T>(normal(rng));
  return p;
}

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Bias-corrected Adam on every parameter of the store using its `grad`.
template <class T>
void adam_step(ParamStore<T>& store, double lr, const AdamConfig& cfg = {}) {
  store.step += 1;
  const double t = static_cast<double>(store.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
  const T one = T(1);
  const T step_scale = static_cast<T>(lr / c1);
  const T inv_c2 = static_cast<T>(1.0 / c2);
  const T eps = static_cast<T>(cfg.epsilon);
  for (auto& p : store) {
    const std::size_t n = p.size();
    T* w = p.value.data();
    const T* g = p.grad.data();
    T* m = p.m.data();
    T* v = p.v.data();
    for (std::size_t i = 0; i < n; ++i) {
      m[i] = b1 * m[i] + (one - b1) * g[i];
      v[i] = b2 * v[i] + (one - b2) * g[i] * g[i];
      w[i] -= step_scale * m[i] / (std::sqrt(v[i] * inv_c2) + eps);
    }
  }
}

/// Variant taking gradients from outside the store; they must align with it
/// parameter by parameter.
template <class T>
void adam_step(ParamStore<T>& store, std::span<const std::vector<T>> grads, double lr,
               const AdamConfig& cfg = {}) {
  if (grads.size() != store.size())
    throw InvalidArgument("adam_step: gradient list does not match the store");
  for (std::size_t i = 0; i < store.size(); ++i)
    if (grads[i].size() != store[i].size())
      throw InvalidArgument("adam_step: gradient for '" + store[i].name + "' has wrong length");
  for (std::size_t i = 0; i < store.size(); ++i) store[i].grad = grads[i];
  adam_step(store, lr, cfg);
}

}  // namespace risce::nn
