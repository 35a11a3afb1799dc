#pragma once

// IENet / CENet built from the nn primitives, with hand-written backward
// passes.
//
//   dense block   f_k = lrelu(conv_k([x, f_1 .. f_{k-1}]))  k = 1..4
//                 f_5 = conv_5([x, f_1 .. f_4])
//                 out = x + beta * f_5
//   residual blk  out = x + beta * DB3(DB2(DB1(x)))
//   IENet         c1 = I1(x); s = I2(RBs(c1)) + c1; out = I3(s)
//   CENet         e = expand(x, K); out = C2(RBs(C1(e))) + e
//
// Without dense connections each conv_k only sees f_{k-1} (f_0 = x).

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "risce/complex_matrix.hpp"
#include "risce/error.hpp"
#include "risce/nn/conv.hpp"
#include "risce/nn/ops.hpp"
#include "risce/nn/params.hpp"
#include "risce/nn/tensor.hpp"
#include "risce/seed.hpp"

namespace risce {

struct NetConfig {
  std::size_t channels = 32;
  std::size_t residual_blocks = 1;
  double beta = 0.2;
  double slope = 0.2;  // LReLU alpha
  bool dense = true;

  void validate(const char* who) const {
    detail::require(channels >= 1, std::string(who) + ": channels must be >= 1");
    detail::require(residual_blocks >= 1, std::string(who) + ": need at least one residual block");
    detail::require(slope > 0.0 && slope < 1.0, std::string(who) + ": LReLU slope must be in (0,1)");
  }
};

struct ModelConfig {
  std::size_t antennas = 16;  // M
  std::size_t elements = 64;  // N
  std::size_t group_size = 2; // K
  bool use_ienet = true;      // false: CENet-only on the raw LS estimate
  NetConfig ienet{32, 2, 0.2, 0.2, true};
  NetConfig cenet{32, 4, 0.2, 0.2, true};

  std::size_t groups() const noexcept { return elements / group_size; }

  void validate() const {
    detail::require(antennas >= 1 && elements >= 1, "ModelConfig: empty channel dimensions");
    detail::require(group_size >= 1 && elements % group_size == 0,
                    "ModelConfig: K must divide N");
    if (use_ienet) ienet.validate("IENet");
    cenet.validate("CENet");
  }
};

// ---------------------------------------------------------------------------
// Complex <-> real feature maps

/// 1 x 2 x rows x cols tensor: channel 0 real part, channel 1 imaginary part.
template <class T>
nn::Tensor4<T> preprocess(const ComplexMatrix& m) {
  nn::Tensor4<T> t({1, 2, m.rows(), m.cols()});
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) {
      t(0, 0, r, c) = static_cast<T>(m(r, c).real());
      t(0, 1, r, c) = static_cast<T>(m(r, c).imag());
    }
  return t;
}

template <class T>
ComplexMatrix postprocess(const nn::Tensor4<T>& t, std::size_t index = 0) {
  if (t.channels() != 2) throw InvalidArgument("postprocess: expected 2 channels");
  if (index >= t.batch()) throw InvalidArgument("postprocess: batch index out of range");
  ComplexMatrix m(t.height(), t.width());
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c)
      m(r, c) = {static_cast<double>(t(index, 0, r, c)), static_cast<double>(t(index, 1, r, c))};
  return m;
}

/// a (x) 1_K^T on complex matrices.
inline ComplexMatrix expand_partial(const ComplexMatrix& partial, std::size_t group_size) {
  ComplexMatrix out(partial.rows(), partial.cols() * group_size);
  for (std::size_t m = 0; m < partial.rows(); ++m)
    for (std::size_t n = 0; n < partial.cols(); ++n)
      for (std::size_t k = 0; k < group_size; ++k) out(m, n * group_size + k) = partial(m, n);
  return out;
}

// ---------------------------------------------------------------------------
// Building blocks

namespace detail {

inline std::uint64_t layer_seed(std::uint64_t seed, const std::string& name) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : name) h = (h ^ c) * 1099511628211ull;
  return derive_seed(seed, {h});
}

template <class T>
std::size_t register_conv(nn::ParamStore<T>& store, const std::string& name, nn::ConvShape shape,
                          std::uint64_t seed, double damping = 1.0) {
  return store.add_conv(name, nn::init_params<T>(layer_seed(seed, name), shape, damping));
}

template <class T>
std::span<T> weight_grad(nn::ParamStore<T>& store, std::size_t idx) {
  return store[idx].grad;
}
template <class T>
std::span<T> bias_grad(nn::ParamStore<T>& store, std::size_t idx) {
  return store[idx + 1].grad;
}

/// Single conv layer bound to a store slot.
template <class T>
struct ConvLayer {
  std::size_t index = 0;

  nn::Tensor4<T> forward(const nn::ParamStore<T>& store, const nn::Tensor4<T>& x) const {
    return nn::conv2d_forward(x, store.conv_ref(index));
  }
  nn::Tensor4<T> backward(nn::ParamStore<T>& store, const nn::Tensor4<T>& x,
                          const nn::Tensor4<T>& g) const {
    return nn::conv2d_backward_into(x, store.conv_ref(index), g, weight_grad(store, index),
                                    bias_grad(store, index));
  }
};

}  // namespace detail

template <class T>
class DenseBlock {
 public:
  static constexpr std::size_t kLayers = 5;

  struct Cache {
    nn::Tensor4<T> input;
    std::array<nn::Tensor4<T>, kLayers> pre;    // conv outputs
    std::array<nn::Tensor4<T>, kLayers - 1> act;  // lrelu(pre[k])
    std::vector<T> cols;  // im2col of [x, f1..f4], one block of rows per feature
  };

  DenseBlock() = default;
  DenseBlock(nn::ParamStore<T>& store, const std::string& prefix, const NetConfig& cfg,
             std::uint64_t seed)
      : channels_(cfg.channels), dense_(cfg.dense), beta_(static_cast<T>(cfg.beta)),
        slope_(static_cast<T>(cfg.slope)) {
    for (std::size_t k = 0; k < kLayers; ++k) {
      in_channels_[k] = dense_ ? channels_ * (k + 1) : channels_;
      const double damping = (k + 1 == kLayers) ? 10.0 : 1.0;
      conv_[k] = detail::register_conv(store, prefix + ".conv_d" + std::to_string(k + 1),
                                       {channels_, in_channels_[k], 3, 3}, seed, damping);
    }
  }

  const std::array<std::size_t, kLayers>& in_channels() const noexcept { return in_channels_; }
  const std::array<std::size_t, kLayers>& conv_indices() const noexcept { return conv_; }

  static std::size_t parameter_count(const NetConfig& cfg) {
    const std::size_t c = cfg.channels;
    std::size_t n = 0;
    for (std::size_t k = 0; k < kLayers; ++k) {
      const std::size_t in = cfg.dense ? c * (k + 1) : c;
      n += c * in * 9 + c;
    }
    return n;
  }

  nn::Tensor4<T> forward(const nn::ParamStore<T>& store, const nn::Tensor4<T>& x,
                         Cache* cache) const {
    if (x.channels() != channels_)
      throw InvalidArgument("dense_block: expected " + std::to_string(channels_) +
                            " input channels, got " + std::to_string(x.channels()));
    Cache local;
    Cache& c = cache ? *cache : local;
    const std::size_t n = x.batch() * x.shape().plane();
    const std::size_t part = channels_ * 9 * n;
    c.cols.resize(kLayers * part);
    c.input = x;
    std::vector<T> scratch;
    const nn::Shape4 out_shape{x.batch(), channels_, x.height(), x.width()};
    nn::im2col(x, 3, 3, c.cols.data());
    for (std::size_t k = 0; k < kLayers; ++k) {
      const T* col = c.cols.data() + (dense_ ? 0 : k * part);
      nn::conv_from_columns(col, store.conv_ref(conv_[k]), out_shape, c.pre[k], scratch);
      if (k + 1 < kLayers) {
        c.act[k] = nn::lrelu(c.pre[k], slope_);
        nn::im2col(c.act[k], 3, 3, c.cols.data() + (k + 1) * part);
      }
    }
    return nn::scaled_residual_add(c.pre[kLayers - 1], x, beta_);
  }

  /// Accumulates parameter gradients; returns d(loss)/d(x).
  nn::Tensor4<T> backward(nn::ParamStore<T>& store, const Cache& c,
                          const nn::Tensor4<T>& grad_out) const {
    const nn::Tensor4<T>& x = c.input;
    const std::size_t n = x.batch() * x.shape().plane();
    const std::size_t part = channels_ * 9 * n;
    std::vector<T> grad_cols(kLayers * part, T(0));
    std::vector<T> g_mat;
    // grad w.r.t. the block's conv outputs, computed top-down
    nn::Tensor4<T> g_feat = grad_out;
    nn::scale_inplace(g_feat, beta_);  // d/d f5
    nn::Tensor4<T> g_x = grad_out;
    for (std::size_t kk = kLayers; kk-- > 0;) {
      // g_feat holds d/d(output of conv kk) after the activation
      nn::Tensor4<T> g_pre =
          (kk + 1 < kLayers) ? nn::lrelu_backward(c.pre[kk], g_feat, slope_) : std::move(g_feat);
      nn::gather_channels(g_pre, g_mat);
      const std::size_t offset = dense_ ? 0 : kk * part;
      nn::conv_backward_columns(c.cols.data() + offset, store.conv_ref(conv_[kk]), g_mat.data(), n,
                                detail::weight_grad(store, conv_[kk]),
                                detail::bias_grad(store, conv_[kk]),
                                grad_cols.data() + offset, /*accumulate_col=*/true);
      // feature kk (x when kk == 0) has now received every contribution
      nn::Tensor4<T> g_in({x.batch(), channels_, x.height(), x.width()});
      nn::col2im_add(grad_cols.data() + kk * part, 3, 3, g_in);
      if (kk == 0)
        nn::add_inplace(g_x, g_in);
      else
        g_feat = std::move(g_in);
    }
    return g_x;
  }

 private:
  std::size_t channels_ = 0;
  bool dense_ = true;
  T beta_ = T(0.2);
  T slope_ = T(0.2);
  std::array<std::size_t, kLayers> in_channels_{};
  std::array<std::size_t, kLayers> conv_{};
};

template <class T>
class ResidualBlock {
 public:
  static constexpr std::size_t kDenseBlocks = 3;

  struct Cache {
    std::array<typename DenseBlock<T>::Cache, kDenseBlocks> blocks;
  };

  ResidualBlock() = default;
  ResidualBlock(nn::ParamStore<T>& store, const std::string& prefix, const NetConfig& cfg,
                std::uint64_t seed)
      : beta_(static_cast<T>(cfg.beta)) {
    for (std::size_t i = 0; i < kDenseBlocks; ++i)
      blocks_[i] = DenseBlock<T>(store, prefix + ".db" + std::to_string(i + 1), cfg, seed);
  }

  const DenseBlock<T>& block(std::size_t i) const { return blocks_.at(i); }

  static std::size_t parameter_count(const NetConfig& cfg) {
    return kDenseBlocks * DenseBlock<T>::parameter_count(cfg);
  }

  nn::Tensor4<T> forward(const nn::ParamStore<T>& store, const nn::Tensor4<T>& x,
                         Cache* cache) const {
    nn::Tensor4<T> h = x;
    for (std::size_t i = 0; i < kDenseBlocks; ++i)
      h = blocks_[i].forward(store, h, cache ? &cache->blocks[i] : nullptr);
    return nn::scaled_residual_add(h, x, beta_);
  }

  nn::Tensor4<T> backward(nn::ParamStore<T>& store, const Cache& c,
                          const nn::Tensor4<T>& grad_out) const {
    nn::Tensor4<T> g = grad_out;
    nn::scale_inplace(g, beta_);
    for (std::size_t i = kDenseBlocks; i-- > 0;) g = blocks_[i].backward(store, c.blocks[i], g);
    nn::add_inplace(g, grad_out);
    return g;
  }

 private:
  T beta_ = T(0.2);
  std::array<DenseBlock<T>, kDenseBlocks> blocks_{};
};

namespace detail {
inline std::size_t conv_count(std::size_t out, std::size_t in, std::size_t k) {
  return out * in * k * k + out;
}
}  // namespace detail

/// Interference-elimination network: M x N~ partial estimate -> refined M x N~.
template <class T>
class IENet {
 public:
  struct Cache {
    nn::Tensor4<T> input, c1, trunk, sum;
    std::vector<typename ResidualBlock<T>::Cache> blocks;
  };

  IENet() = default;
  IENet(nn::ParamStore<T>& store, const NetConfig& cfg, std::uint64_t seed,
        const std::string& prefix = "ienet")
      : cfg_(cfg) {
    cfg.validate("IENet");
    const std::size_t c = cfg.channels;
    first_ = store.size();
    i1_.index = detail::register_conv(store, prefix + ".conv_i1", {c, 2, 5, 5}, seed);
    for (std::size_t r = 0; r < cfg.residual_blocks; ++r)
      blocks_.emplace_back(store, prefix + ".rb" + std::to_string(r + 1), cfg, seed);
    i2_.index = detail::register_conv(store, prefix + ".conv_i2", {c, c, 3, 3}, seed);
    i3_.index = detail::register_conv(store, prefix + ".conv_i3", {2, c, 3, 3}, seed);
    last_ = store.size();
    std::size_t registered = 0;
    for (std::size_t i = first_; i < last_; ++i) registered += store[i].size();
    if (registered != parameter_count(cfg))
      throw InvalidArgument("IENet: parameter count does not match closed form");
  }

  static std::size_t parameter_count(const NetConfig& cfg) {
    const std::size_t c = cfg.channels;
    return detail::conv_count(c, 2, 5) + cfg.residual_blocks * ResidualBlock<T>::parameter_count(cfg) +
           detail::conv_count(c, c, 3) + detail::conv_count(2, c, 3);
  }

  /// Half-open range of store indices owned by this network.
  std::pair<std::size_t, std::size_t> param_range() const { return {first_, last_}; }
  const ResidualBlock<T>& block(std::size_t i) const { return blocks_.at(i); }

  nn::Tensor4<T> forward(const nn::ParamStore<T>& store, const nn::Tensor4<T>& x,
                         Cache* cache) const {
    if (x.channels() != 2) throw InvalidArgument("IENet: input must have 2 channels");
    Cache local;
    Cache& c = cache ? *cache : local;
    c.input = x;
    c.c1 = i1_.forward(store, x);
    c.blocks.resize(blocks_.size());
    nn::Tensor4<T> h = c.c1;
    for (std::size_t r = 0; r < blocks_.size(); ++r)
      h = blocks_[r].forward(store, h, cache ? &c.blocks[r] : nullptr);
    c.trunk = std::move(h);
    nn::Tensor4<T> s = i2_.forward(store, c.trunk);
    nn::add_inplace(s, c.c1);
    c.sum = std::move(s);
    return i3_.forward(store, c.sum);
  }

  nn::Tensor4<T> backward(nn::ParamStore<T>& store, const Cache& c,
                          const nn::Tensor4<T>& grad_out) const {
    nn::Tensor4<T> g_sum = i3_.backward(store, c.sum, grad_out);
    nn::Tensor4<T> g = i2_.backward(store, c.trunk, g_sum);
    for (std::size_t r = blocks_.size(); r-- > 0;) g = blocks_[r].backward(store, c.blocks[r], g);
    nn::add_inplace(g, g_sum);  // global shortcut from conv_i1
    return i1_.backward(store, c.input, g);
  }

 private:
  NetConfig cfg_{};
  detail::ConvLayer<T> i1_, i2_, i3_;
  std::vector<ResidualBlock<T>> blocks_;
  std::size_t first_ = 0, last_ = 0;
};

/// Channel-extrapolation network: M x N~ partial channel -> M x N full channel.
template <class T>
class CENet {
 public:
  struct Cache {
    nn::Tensor4<T> expanded, c1, trunk;
    std::vector<typename ResidualBlock<T>::Cache> blocks;
  };

  CENet() = default;
  CENet(nn::ParamStore<T>& store, const NetConfig& cfg, std::size_t group_size, std::uint64_t seed,
        const std::string& prefix = "cenet")
      : cfg_(cfg), group_size_(group_size) {
    cfg.validate("CENet");
    detail::require(group_size >= 1, "CENet: K must be >= 1");
    const std::size_t c = cfg.channels;
    first_ = store.size();
    c1_.index = detail::register_conv(store, prefix + ".conv_c1", {c, 2, 5, 5}, seed);
    for (std::size_t r = 0; r < cfg.residual_blocks; ++r)
      blocks_.emplace_back(store, prefix + ".rb" + std::to_string(r + 1), cfg, seed);
    c2_.index = detail::register_conv(store, prefix + ".conv_c2", {2, c, 3, 3}, seed);
    last_ = store.size();
    std::size_t registered = 0;
    for (std::size_t i = first_; i < last_; ++i) registered += store[i].size();
    if (registered != parameter_count(cfg))
      throw InvalidArgument("CENet: parameter count does not match closed form");
  }

  static std::size_t parameter_count(const NetConfig& cfg) {
    const std::size_t c = cfg.channels;
    return detail::conv_count(c, 2, 5) + cfg.residual_blocks * ResidualBlock<T>::parameter_count(cfg) +
           detail::conv_count(2, c, 3);
  }

  std::pair<std::size_t, std::size_t> param_range() const { return {first_, last_}; }
  std::size_t group_size() const noexcept { return group_size_; }

  nn::Tensor4<T> forward(const nn::ParamStore<T>& store, const nn::Tensor4<T>& x,
                         Cache* cache) const {
    if (x.channels() != 2) throw InvalidArgument("CENet: input must have 2 channels");
    Cache local;
    Cache& c = cache ? *cache : local;
    c.expanded = nn::expand_width(x, group_size_);
    c.c1 = c1_.forward(store, c.expanded);
    c.blocks.resize(blocks_.size());
    nn::Tensor4<T> h = c.c1;
    for (std::size_t r = 0; r < blocks_.size(); ++r)
      h = blocks_[r].forward(store, h, cache ? &c.blocks[r] : nullptr);
    c.trunk = std::move(h);
    nn::Tensor4<T> out = c2_.forward(store, c.trunk);
    nn::add_inplace(out, c.expanded);
    return out;
  }

  /// Returns the gradient w.r.t. the M x N~ input.
  nn::Tensor4<T> backward(nn::ParamStore<T>& store, const Cache& c,
                          const nn::Tensor4<T>& grad_out) const {
    nn::Tensor4<T> g = c2_.backward(store, c.trunk, grad_out);
    for (std::size_t r = blocks_.size(); r-- > 0;) g = blocks_[r].backward(store, c.blocks[r], g);
    nn::Tensor4<T> g_e = c1_.backward(store, c.expanded, g);
    nn::add_inplace(g_e, grad_out);  // identity mapping
    return nn::expand_width_backward(g_e, group_size_);
  }

 private:
  NetConfig cfg_{};
  std::size_t group_size_ = 1;
  detail::ConvLayer<T> c1_, c2_;
  std::vector<ResidualBlock<T>> blocks_;
  std::size_t first_ = 0, last_ = 0;
};

/// IENet followed by CENet sharing one parameter store (IENet optional).
template <class T>
class JointModel {
 public:
  struct Cache {
    typename IENet<T>::Cache ienet;
    typename CENet<T>::Cache cenet;
  };

  struct Output {
    nn::Tensor4<T> partial;  // refined M x N~ (the input itself without IENet)
    nn::Tensor4<T> full;     // M x N
  };

  explicit JointModel(const ModelConfig& cfg, std::uint64_t seed = 0) : cfg_(cfg) {
    cfg.validate();
    if (cfg.use_ienet) ienet_ = std::make_unique<IENet<T>>(store_, cfg.ienet, seed);
    cenet_ = std::make_unique<CENet<T>>(store_, cfg.cenet, cfg.group_size, seed);
  }

  const ModelConfig& config() const noexcept { return cfg_; }
  nn::ParamStore<T>& params() noexcept { return store_; }
  const nn::ParamStore<T>& params() const noexcept { return store_; }
  bool has_ienet() const noexcept { return ienet_ != nullptr; }
  const IENet<T>& ienet() const { return *ienet_; }
  const CENet<T>& cenet() const { return *cenet_; }

  static std::size_t parameter_count(const ModelConfig& cfg) {
    return (cfg.use_ienet ? IENet<T>::parameter_count(cfg.ienet) : 0) +
           CENet<T>::parameter_count(cfg.cenet);
  }

  Output forward(const nn::Tensor4<T>& a0, Cache* cache = nullptr) const {
    check_input(a0);
    Output out;
    out.partial = ienet_ ? ienet_->forward(store_, a0, cache ? &cache->ienet : nullptr) : a0;
    out.full = cenet_->forward(store_, out.partial, cache ? &cache->cenet : nullptr);
    return out;
  }

  /// Accumulates d(loss)/d(params) into the store given the loss gradients
  /// w.r.t. both outputs.
  void backward(const Cache& cache, const nn::Tensor4<T>& grad_partial,
                const nn::Tensor4<T>& grad_full) {
    nn::Tensor4<T> g = cenet_->backward(store_, cache.cenet, grad_full);
    if (ienet_) {
      nn::add_inplace(g, grad_partial);
      ienet_->backward(store_, cache.ienet, g);
    }
  }

  /// Replace every parameter by the values held in `other` (same layout).
  void load(const nn::ParamStore<T>& other) {
    if (other.size() != store_.size())
      throw FormatError("checkpoint parameter list does not match the model");
    for (std::size_t i = 0; i < store_.size(); ++i) {
      if (other[i].name != store_[i].name || other[i].shape != store_[i].shape)
        throw FormatError("checkpoint parameter '" + other[i].name + "' does not match model");
      store_[i].value = other[i].value;
      store_[i].m = other[i].m;
      store_[i].v = other[i].v;
    }
    store_.step = other.step;
  }

  /// Zeroes every parameter in [first, last), used for the zero-trunk
  /// identity configurations.
  void zero_range(std::pair<std::size_t, std::size_t> range) {
    for (std::size_t i = range.first; i < range.second; ++i)
      std::fill(store_[i].value.begin(), store_[i].value.end(), T(0));
  }

 private:
  void check_input(const nn::Tensor4<T>& a0) const {
    if (a0.channels() != 2 || a0.height() != cfg_.antennas || a0.width() != cfg_.groups())
      throw InvalidArgument("JointModel: input " + a0.shape().str() + " does not match (B,2," +
                            std::to_string(cfg_.antennas) + "," + std::to_string(cfg_.groups()) +
                            ")");
  }

  ModelConfig cfg_;
  nn::ParamStore<T> store_;
  std::unique_ptr<IENet<T>> ienet_;
  std::unique_ptr<CENet<T>> cenet_;
};

// Single-matrix conveniences.

template <class T>
ComplexMatrix ienet_forward(const JointModel<T>& model, const ComplexMatrix& a0) {
  if (!model.has_ienet()) throw InvalidArgument("ienet_forward: model has no IENet");
  if (a0.rows() != model.config().antennas || a0.cols() != model.config().groups())
    throw InvalidArgument("ienet_forward: input does not match model dimensions");
  return postprocess(model.ienet().forward(model.params(), preprocess<T>(a0), nullptr));
}

template <class T>
ComplexMatrix cenet_forward(const JointModel<T>& model, const ComplexMatrix& partial) {
  if (partial.rows() != model.config().antennas || partial.cols() != model.config().groups())
    throw InvalidArgument("cenet_forward: input does not match model dimensions");
  return postprocess(model.cenet().forward(model.params(), preprocess<T>(partial), nullptr));
}

template <class T>
std::pair<ComplexMatrix, ComplexMatrix> joint_forward(const JointModel<T>& model,
                                                      const ComplexMatrix& a0) {
  auto out = model.forward(preprocess<T>(a0));
  return {postprocess(out.partial), postprocess(out.full)};
}

}  // namespace risce
