#pragma once

// Finite-difference gradient checks for every differentiable op and for the
// joint training loss. Shared by the test suites and the `gradcheck` command.

#include <limits>
#include <random>
#include <string>
#include <vector>

#include "risce/models.hpp"
#include "risce/nn/conv.hpp"
#include "risce/nn/gradcheck.hpp"
#include "risce/nn/ops.hpp"
#include "risce/training.hpp"

namespace risce {

struct NamedCheck {
  std::string name;
  nn::GradCheckReport report;
};

namespace detail {

template <class T>
nn::Tensor4<T> random_tensor(nn::Shape4 s, std::mt19937_64& rng, double lo = -1.0,
                             double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  nn::Tensor4<T> t(s);
  for (auto& v : t.storage()) v = static_cast<T>(u(rng));
  return t;
}

/// Uniform in +-[margin, 1]: keeps lrelu inputs away from the kink.
template <class T>
nn::Tensor4<T> random_away_from_zero(nn::Shape4 s, std::mt19937_64& rng, double margin) {
  std::uniform_real_distribution<double> u(margin, 1.0);
  std::bernoulli_distribution sign(0.5);
  nn::Tensor4<T> t(s);
  for (auto& v : t.storage()) v = static_cast<T>(sign(rng) ? u(rng) : -u(rng));
  return t;
}

/// sum_i r_i * y_i in double; the probe r makes every output entry matter.
template <class T>
double probe(const nn::Tensor4<T>& y, const nn::Tensor4<T>& r) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i)
    s += static_cast<double>(r.data()[i]) * static_cast<double>(y.data()[i]);
  return s;
}

template <class T>
std::span<T> all(nn::Tensor4<T>& t) {
  return t.span();
}
template <class T>
std::span<const T> all(const nn::Tensor4<T>& t) {
  return {t.data(), t.size()};
}

}  // namespace detail

/// Gradient checks for the nn_core ops on small random shapes. Every op is
/// linear or piecewise linear (lrelu inputs avoid the kink), so central
/// differences are exact and the error measures rounding only.
template <class T>
std::vector<NamedCheck> check_ops(std::uint64_t seed, double eps) {
  using nn::Shape4;
  using nn::Tensor4;
  std::mt19937_64 rng(seed);
  std::vector<NamedCheck> out;

  // conv2d, 3x3 and 5x5
  for (std::size_t k : {3u, 5u}) {
    const Shape4 in_shape{1, 2, 4, 4};
    Tensor4<T> x = detail::random_tensor<T>(in_shape, rng);
    nn::ConvParams<T> p = nn::init_params<T>(seed + k, {3, 2, k, k});
    for (auto& b : p.bias) b = static_cast<T>(0.1);
    const Tensor4<T> r = detail::random_tensor<T>({1, 3, 4, 4}, rng);
    const auto g = nn::conv2d_backward(x, p, r);
    const auto loss = [&] { return detail::probe(nn::conv2d_forward(x, p), r); };
    const std::string tag = "conv2d_" + std::to_string(k) + "x" + std::to_string(k);
    out.push_back({tag + ".input", nn::check_gradient<T>(x.span(), detail::all(g.input), loss, eps)});
    out.push_back({tag + ".weight",
                   nn::check_gradient<T>(std::span<T>(p.weight), std::span<const T>(g.weight), loss, eps)});
    out.push_back({tag + ".bias",
                   nn::check_gradient<T>(std::span<T>(p.bias), std::span<const T>(g.bias), loss, eps)});
  }

  // lrelu (inputs kept at least 2 eps from zero)
  {
    const T slope = static_cast<T>(0.2);
    Tensor4<T> x = detail::random_away_from_zero<T>({2, 3, 3, 3}, rng, 4 * eps);
    const Tensor4<T> r = detail::random_tensor<T>(x.shape(), rng);
    const auto g = nn::lrelu_backward(x, r, slope);
    const auto loss = [&] { return detail::probe(nn::lrelu(x, slope), r); };
    out.push_back({"lrelu.input", nn::check_gradient<T>(x.span(), detail::all(g), loss, eps)});
  }

  // concat + split
  {
    Tensor4<T> a = detail::random_tensor<T>({2, 2, 3, 3}, rng);
    Tensor4<T> b = detail::random_tensor<T>({2, 3, 3, 3}, rng);
    const Tensor4<T> r = detail::random_tensor<T>({2, 5, 3, 3}, rng);
    const std::size_t counts[] = {2, 3};
    const auto g = nn::split_channels(r, counts);
    const auto loss = [&] { return detail::probe(nn::concat_channels<T>({&a, &b}), r); };
    out.push_back({"concat.first", nn::check_gradient<T>(a.span(), detail::all(g[0]), loss, eps)});
    out.push_back({"concat.second", nn::check_gradient<T>(b.span(), detail::all(g[1]), loss, eps)});
  }

  // scaled residual add
  {
    const T beta = static_cast<T>(0.2);
    Tensor4<T> t = detail::random_tensor<T>({2, 2, 3, 3}, rng);
    Tensor4<T> x = detail::random_tensor<T>({2, 2, 3, 3}, rng);
    const Tensor4<T> r = detail::random_tensor<T>(x.shape(), rng);
    Tensor4<T> gt = r;
    nn::scale_inplace(gt, beta);
    const auto loss = [&] { return detail::probe(nn::scaled_residual_add(t, x, beta), r); };
    out.push_back({"residual_add.trunk", nn::check_gradient<T>(t.span(), detail::all(gt), loss, eps)});
    out.push_back({"residual_add.identity", nn::check_gradient<T>(x.span(), detail::all(r), loss, eps)});
  }

  // K-fold width expansion
  {
    Tensor4<T> x = detail::random_tensor<T>({2, 2, 3, 2}, rng);
    const Tensor4<T> r = detail::random_tensor<T>({2, 2, 3, 6}, rng);
    const auto g = nn::expand_width_backward(r, 3);
    const auto loss = [&] { return detail::probe(nn::expand_width(x, 3), r); };
    out.push_back({"expand_width.input", nn::check_gradient<T>(x.span(), detail::all(g), loss, eps)});
  }

  return out;
}

/// Gradient checks for dense and residual blocks (input and every weight).
namespace detail {

/// Smallest |pre-activation| feeding a leaky ReLU in one dense block.
template <class T>
double kink_margin(const typename DenseBlock<T>::Cache& c) {
  double m = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k + 1 < DenseBlock<T>::kLayers; ++k)
    for (T v : all(c.pre[k])) m = std::min(m, std::abs(static_cast<double>(v)));
  return m;
}

}  // namespace detail

/// Block inputs are redrawn until no leaky-ReLU input lies within
/// kKinkMargin of zero, so a step of eps cannot cross a kink.
inline constexpr double kKinkMargin = 0.01;
inline constexpr int kMaxRedraws = 1000;

template <class T>
std::vector<NamedCheck> check_blocks(std::uint64_t seed, double eps) {
  using nn::Tensor4;
  std::mt19937_64 rng(seed);
  std::vector<NamedCheck> out;
  for (bool dense : {true, false}) {
    nn::ParamStore<T> store;
    NetConfig cfg{3, 1, 0.2, 0.2, dense};
    DenseBlock<T> db(store, "db", cfg, seed);
    Tensor4<T> x;
    typename DenseBlock<T>::Cache cache;
    for (int tries = 0; tries < kMaxRedraws; ++tries) {
      x = detail::random_tensor<T>({2, 3, 3, 4}, rng);
      db.forward(store, x, &cache);
      if (detail::kink_margin<T>(cache) >= kKinkMargin) break;
    }
    const Tensor4<T> r = detail::random_tensor<T>(x.shape(), rng);
    store.zero_grads();
    const auto gx = db.backward(store, cache, r);
    const auto loss = [&] { return detail::probe(db.forward(store, x, nullptr), r); };
    const std::string tag = dense ? "dense_block" : "plain_block";
    out.push_back({tag + ".input", nn::check_gradient<T>(x.span(), detail::all(gx), loss, eps)});
    for (auto& p : store)
      out.push_back({tag + "." + p.name,
                     nn::check_gradient<T>(std::span<T>(p.value), std::span<const T>(p.grad), loss, eps)});
  }

  // residual block
  {
    nn::ParamStore<T> store;
    NetConfig cfg{2, 1, 0.2, 0.2, true};
    ResidualBlock<T> rb(store, "rb", cfg, seed);
    Tensor4<T> x;
    typename ResidualBlock<T>::Cache cache;
    for (int tries = 0; tries < kMaxRedraws; ++tries) {
      x = detail::random_tensor<T>({1, 2, 3, 3}, rng);
      rb.forward(store, x, &cache);
      double m = std::numeric_limits<double>::infinity();
      for (const auto& b : cache.blocks) m = std::min(m, detail::kink_margin<T>(b));
      if (m >= kKinkMargin) break;
    }
    const Tensor4<T> r = detail::random_tensor<T>(x.shape(), rng);
    store.zero_grads();
    const auto gx = rb.backward(store, cache, r);
    const auto loss = [&] { return detail::probe(rb.forward(store, x, nullptr), r); };
    out.push_back({"residual_block.input", nn::check_gradient<T>(x.span(), detail::all(gx), loss, eps)});
  }
  return out;
}

/// Micro configuration used for the end-to-end loss check.
inline ModelConfig micro_model_config() {
  ModelConfig c;
  c.antennas = 2;
  c.elements = 4;
  c.group_size = 2;
  c.ienet.residual_blocks = 1;
  c.cenet.residual_blocks = 1;
  return c;
}

/// Checks d(L_C + rho L_I)/d(theta) for every parameter tensor of the joint
/// model on one random sample. About `per_tensor` evenly spaced entries of
/// each tensor are perturbed.
template <class T>
std::vector<NamedCheck> check_joint_loss(const ModelConfig& cfg, std::uint64_t seed, double eps,
                                         double rho = 0.1, std::size_t per_tensor = 40) {
  JointModel<T> model(cfg, seed);
  std::mt19937_64 rng(derive_seed(seed, {0x6C}));
  const std::size_t m = cfg.antennas, g = cfg.groups(), n = cfg.elements;
  Batch<T> b{detail::random_tensor<T>({1, 2, m, g}, rng), detail::random_tensor<T>({1, 2, m, g}, rng),
             detail::random_tensor<T>({1, 2, m, n}, rng)};
  const auto loss = [&] {
    const auto o = model.forward(b.a0);
    return mse_loss(b.a_full, o.full) + (model.has_ienet() ? rho * mse_loss(b.a_tilde, o.partial) : 0.0);
  };
  typename JointModel<T>::Cache cache;
  const auto o = model.forward(b.a0, &cache);
  nn::Tensor4<T> g_full, g_partial(o.partial.shape());
  mse_loss(b.a_full, o.full, &g_full, 1.0);
  if (model.has_ienet()) mse_loss(b.a_tilde, o.partial, &g_partial, rho);
  model.params().zero_grads();
  model.backward(cache, g_partial, g_full);
  std::vector<NamedCheck> out;
  for (auto& p : model.params()) {
    const std::size_t stride = std::max<std::size_t>(1, p.size() / per_tensor);
    out.push_back({p.name, nn::check_gradient<T>(std::span<T>(p.value), std::span<const T>(p.grad),
                                                 loss, eps, stride)});
  }
  return out;
}

inline nn::GradCheckReport summarize(const std::vector<NamedCheck>& checks) {
  nn::GradCheckReport total;
  for (const auto& c : checks) total.merge(c.report, c.name);
  return total;
}

}  // namespace risce
