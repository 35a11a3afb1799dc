#pragma once

// Joint IENet + CENet training: L = L_C + rho * L_I, a single Adam state
// over both parameter sets, piecewise-constant halving learning rate.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <functional>
#include <iomanip>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "risce/dataset.hpp"
#include "risce/error.hpp"
#include "risce/metrics.hpp"
#include "risce/models.hpp"
#include "risce/nn/checkpoint.hpp"
#include "risce/nn/params.hpp"
#include "risce/seed.hpp"

namespace risce {

struct TrainConfig {
  double rho = 0.1;
  double lr0 = 1e-3;
  std::uint64_t halve_every = 50000;
  std::uint64_t total_iters = 300000;
  std::size_t batch_size = 16;
  std::uint64_t seed = 1;
  std::uint64_t val_every = 1000;
  std::vector<std::uint64_t> extra_val_iters{200};
  double clip_norm = 0.0;  // 0 disables gradient clipping
  std::size_t eval_batch = 64;

  void validate() const {
    detail::require(rho >= 0.0, "TrainConfig: rho must be >= 0");
    detail::require(lr0 > 0.0, "TrainConfig: initial learning rate must be > 0");
    detail::require(batch_size >= 1, "TrainConfig: batch size must be >= 1");
    detail::require(halve_every >= 1, "TrainConfig: halve_every must be >= 1");
    detail::require(val_every >= 1, "TrainConfig: val_every must be >= 1");
    detail::require(clip_norm >= 0.0, "TrainConfig: clip_norm must be >= 0");
  }
};

// ---------------------------------------------------------------------------
// Losses

/// (1 / (B * rows * cols)) * sum_b ||label_b - output_b||_F^2 on 2-channel
/// tensors. Optionally writes d(loss)/d(output).
template <class T>
double mse_loss(const nn::Tensor4<T>& labels, const nn::Tensor4<T>& outputs,
                nn::Tensor4<T>* grad = nullptr, double weight = 1.0) {
  if (labels.shape() != outputs.shape() || labels.channels() != 2)
    throw InvalidArgument("mse_loss: expected matching 2-channel tensors");
  const double norm =
      static_cast<double>(labels.batch() * labels.height() * labels.width());
  double s = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double d = static_cast<double>(outputs.data()[i]) - static_cast<double>(labels.data()[i]);
    s += d * d;
  }
  if (grad) {
    *grad = nn::Tensor4<T>(labels.shape());
    const T g = static_cast<T>(2.0 * weight / norm);
    for (std::size_t i = 0; i < labels.size(); ++i)
      grad->data()[i] = g * (outputs.data()[i] - labels.data()[i]);
  }
  return s / norm;
}

namespace detail {
inline double complex_batch_loss(std::span<const ComplexMatrix> labels,
                                 std::span<const ComplexMatrix> outputs) {
  if (labels.size() != outputs.size() || labels.empty())
    throw InvalidArgument("loss: batches must be non-empty and equally sized");
  double s = 0.0;
  const std::size_t elems = labels.front().size();
  for (std::size_t i = 0; i < labels.size(); ++i) {
    labels[i].check_same_shape(outputs[i], "loss");
    if (labels[i].size() != elems) throw InvalidArgument("loss: ragged batch");
    s += frobenius_norm_sq(labels[i] - outputs[i]);
  }
  return s / static_cast<double>(labels.size() * elems);
}
}  // namespace detail

/// IENet loss over a batch of M x N~ matrices.
inline double loss_ienet(std::span<const ComplexMatrix> labels,
                         std::span<const ComplexMatrix> outputs) {
  return detail::complex_batch_loss(labels, outputs);
}

/// CENet loss over a batch of M x N matrices.
inline double loss_cenet(std::span<const ComplexMatrix> labels,
                         std::span<const ComplexMatrix> outputs) {
  return detail::complex_batch_loss(labels, outputs);
}

inline double joint_loss(double loss_i, double loss_c, double rho) { return loss_c + rho * loss_i; }

inline double lr_schedule(std::uint64_t iter, double lr0, std::uint64_t halve_every) {
  return lr0 * std::ldexp(1.0, -static_cast<int>(iter / halve_every));
}

// ---------------------------------------------------------------------------
// Packed float data

/// Samples converted once to contiguous 2 x rows x cols real blocks.
template <class T>
struct PackedSet {
  std::size_t antennas = 0, groups = 0, elements = 0, count = 0;
  std::vector<T> a0, a_tilde, a_full;

  std::size_t partial_stride() const noexcept { return 2 * antennas * groups; }
  std::size_t full_stride() const noexcept { return 2 * antennas * elements; }
};

namespace detail {
template <class T>
void pack_matrix(const ComplexMatrix& m, T* dst) {
  const std::size_t plane = m.size();
  for (std::size_t i = 0; i < plane; ++i) {
    dst[i] = static_cast<T>(m.data()[i].real());
    dst[plane + i] = static_cast<T>(m.data()[i].imag());
  }
}
}  // namespace detail

template <class T>
PackedSet<T> pack(const std::vector<Sample>& samples, std::span<const std::size_t> indices) {
  if (indices.empty()) throw InvalidArgument("pack: no samples selected");
  PackedSet<T> p;
  const auto& first = samples.at(indices.front());
  p.antennas = first.a_full.rows();
  p.elements = first.a_full.cols();
  p.groups = first.a0.cols();
  p.count = indices.size();
  p.a0.resize(p.count * p.partial_stride());
  p.a_tilde.resize(p.count * p.partial_stride());
  p.a_full.resize(p.count * p.full_stride());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const auto& s = samples.at(indices[i]);
    if (s.a_full.rows() != p.antennas || s.a_full.cols() != p.elements ||
        s.a0.rows() != p.antennas || s.a0.cols() != p.groups || s.a_tilde.cols() != p.groups)
      throw InvalidArgument("pack: samples have inconsistent dimensions");
    detail::pack_matrix(s.a0, p.a0.data() + i * p.partial_stride());
    detail::pack_matrix(s.a_tilde, p.a_tilde.data() + i * p.partial_stride());
    detail::pack_matrix(s.a_full, p.a_full.data() + i * p.full_stride());
  }
  return p;
}

template <class T>
PackedSet<T> pack(const std::vector<Sample>& samples) {
  std::vector<std::size_t> all(samples.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return pack<T>(samples, all);
}

template <class T>
struct Batch {
  nn::Tensor4<T> a0, a_tilde, a_full;
};

template <class T>
Batch<T> make_batch(const PackedSet<T>& set, std::span<const std::size_t> rows) {
  const std::size_t b = rows.size();
  Batch<T> out{nn::Tensor4<T>({b, 2, set.antennas, set.groups}),
               nn::Tensor4<T>({b, 2, set.antennas, set.groups}),
               nn::Tensor4<T>({b, 2, set.antennas, set.elements})};
  const std::size_t ps = set.partial_stride(), fs = set.full_stride();
  for (std::size_t i = 0; i < b; ++i) {
    const std::size_t r = rows[i];
    if (r >= set.count) throw InvalidArgument("make_batch: row out of range");
    std::memcpy(out.a0.data() + i * ps, set.a0.data() + r * ps, sizeof(T) * ps);
    std::memcpy(out.a_tilde.data() + i * ps, set.a_tilde.data() + r * ps, sizeof(T) * ps);
    std::memcpy(out.a_full.data() + i * fs, set.a_full.data() + r * fs, sizeof(T) * fs);
  }
  return out;
}

/// Epoch-wise shuffled sampling without replacement. The sample at global
/// draw position p is perm_{p / n}[p % n], so any iteration's batch can be
/// reproduced without replaying earlier ones.
class BatchSampler {
 public:
  BatchSampler(std::size_t count, std::size_t batch, std::uint64_t seed)
      : count_(count), batch_(batch), seed_(seed) {
    detail::require(count >= 1 && batch >= 1, "BatchSampler: empty set or batch");
  }

  std::vector<std::size_t> batch(std::uint64_t iter) {
    std::vector<std::size_t> rows(batch_);
    for (std::size_t i = 0; i < batch_; ++i) {
      const std::uint64_t pos = iter * batch_ + i;
      const std::uint64_t epoch = pos / count_;
      if (epoch != epoch_ || perm_.empty()) load_epoch(epoch);
      rows[i] = perm_[pos % count_];
    }
    return rows;
  }

 private:
  void load_epoch(std::uint64_t epoch) {
    perm_.resize(count_);
    for (std::size_t i = 0; i < count_; ++i) perm_[i] = i;
    std::mt19937_64 rng(derive_seed(seed_, {0xE90C, epoch}));
    std::shuffle(perm_.begin(), perm_.end(), rng);
    epoch_ = epoch;
  }

  std::size_t count_, batch_;
  std::uint64_t seed_;
  std::uint64_t epoch_ = 0;
  std::vector<std::size_t> perm_;
};

// ---------------------------------------------------------------------------
// Step and loop

struct StepLosses {
  double loss_i = 0.0;
  double loss_c = 0.0;
  double total = 0.0;
  double lr = 0.0;
  double grad_norm = 0.0;
};

/// Forward, joint loss, backward through both networks, one Adam step.
/// Without an IENet the partial-loss term is reported as 0 and not optimised.
template <class T>
StepLosses train_step(JointModel<T>& model, const Batch<T>& batch, const TrainConfig& cfg,
                      double lr) {
  typename JointModel<T>::Cache cache;
  auto out = model.forward(batch.a0, &cache);
  nn::Tensor4<T> g_full, g_partial;
  StepLosses r;
  r.lr = lr;
  r.loss_c = mse_loss(batch.a_full, out.full, &g_full, 1.0);
  if (model.has_ienet()) {
    r.loss_i = mse_loss(batch.a_tilde, out.partial, &g_partial, cfg.rho);
  } else {
    g_partial = nn::Tensor4<T>(out.partial.shape());
  }
  r.total = joint_loss(r.loss_i, r.loss_c, model.has_ienet() ? cfg.rho : 0.0);
  if (!std::isfinite(r.total))
    throw DivergenceError("training diverged at step " + std::to_string(model.params().step + 1) +
                          ": loss_I=" + std::to_string(r.loss_i) +
                          " loss_C=" + std::to_string(r.loss_c));
  auto& store = model.params();
  store.zero_grads();
  model.backward(cache, g_partial, g_full);
  r.grad_norm = store.grad_norm();
  if (!std::isfinite(r.grad_norm))
    throw DivergenceError("non-finite gradient at step " + std::to_string(store.step + 1));
  if (cfg.clip_norm > 0.0 && r.grad_norm > cfg.clip_norm) {
    const T s = static_cast<T>(cfg.clip_norm / r.grad_norm);
    for (auto& p : store)
      for (auto& g : p.grad) g *= s;
  }
  nn::adam_step(store, lr);
  return r;
}

/// Mean per-sample NMSE of the full-channel output over `set`, computed on
/// de-normalised values (`scale` is the factor applied at normalisation).
template <class T>
double evaluate_nmse(const JointModel<T>& model, const PackedSet<T>& set, double scale = 1.0,
                     std::size_t eval_batch = 64) {
  double total = 0.0;
  std::vector<std::size_t> rows;
  for (std::size_t start = 0; start < set.count; start += eval_batch) {
    const std::size_t end = std::min(set.count, start + eval_batch);
    rows.resize(end - start);
    for (std::size_t i = start; i < end; ++i) rows[i - start] = i;
    const auto batch = make_batch(set, rows);
    const auto out = model.forward(batch.a0);
    total += nmse_sum(batch.a_full, out.full, 1.0 / scale);
  }
  return total / static_cast<double>(set.count);
}

/// NMSE of the LS expansion a0 (x) 1_K^T over `set`.
template <class T>
double evaluate_ls_nmse(const PackedSet<T>& set, std::size_t group_size, double scale = 1.0,
                        std::size_t eval_batch = 64) {
  double total = 0.0;
  std::vector<std::size_t> rows;
  for (std::size_t start = 0; start < set.count; start += eval_batch) {
    const std::size_t end = std::min(set.count, start + eval_batch);
    rows.resize(end - start);
    for (std::size_t i = start; i < end; ++i) rows[i - start] = i;
    const auto batch = make_batch(set, rows);
    total += nmse_sum(batch.a_full, nn::expand_width(batch.a0, group_size), 1.0 / scale);
  }
  return total / static_cast<double>(set.count);
}

struct LossRecord {
  std::uint64_t iter = 0;
  double lr = 0.0;
  double loss_i = 0.0;
  double loss_c = 0.0;
  double loss_total = 0.0;
  double val_nmse_db = 0.0;

  friend bool operator==(const LossRecord&, const LossRecord&) = default;
};

inline constexpr const char* kLossLogHeader = "iter,lr,loss_I,loss_C,loss_total,val_nmse_db";

inline std::string format_record(const LossRecord& r) {
  std::ostringstream os;
  os << r.iter << ',' << std::setprecision(17) << r.lr << ',' << r.loss_i << ',' << r.loss_c << ','
     << r.loss_total << ',' << r.val_nmse_db;
  return os.str();
}

struct LoopOptions {
  std::string log_path;         // CSV loss log; empty disables
  std::string checkpoint_path;  // final (and periodic) checkpoint; empty disables
  std::uint64_t checkpoint_every = 0;
  nn::Metadata checkpoint_meta;
  double scale = 1.0;  // normalisation scale, for de-normalised validation NMSE
  std::function<void(const LossRecord&)> on_record;
};

struct TrainResult {
  std::vector<LossRecord> records;
  double final_val_nmse = 0.0;
  double seconds = 0.0;
};

inline bool is_validation_iter(const TrainConfig& cfg, std::uint64_t done) {
  if (done == cfg.total_iters || done % cfg.val_every == 0) return true;
  return std::find(cfg.extra_val_iters.begin(), cfg.extra_val_iters.end(), done) !=
         cfg.extra_val_iters.end();
}

inline nn::Metadata with_scale_meta(nn::Metadata meta, double scale) {
  std::ostringstream os;
  os << std::setprecision(17) << scale;
  meta["normalization_scale"] = os.str();
  return meta;
}

/// Runs from the model's current step (0 for a fresh model, the stored step
/// after loading a checkpoint) up to cfg.total_iters. The loss log is
/// appended to; a fresh run (step 0) truncates it first.
template <class T>
TrainResult train_loop(JointModel<T>& model, const PackedSet<T>& train, const PackedSet<T>& val,
                       const TrainConfig& cfg, const LoopOptions& opt = {}) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  TrainResult result;
  BatchSampler sampler(train.count, cfg.batch_size, derive_seed(cfg.seed, {0xBA7C}));
  std::ofstream log;
  if (!opt.log_path.empty()) {
    const bool fresh = model.params().step == 0;
    log.open(opt.log_path, fresh ? std::ios::trunc : std::ios::app);
    if (!log) throw IoError("cannot open loss log '" + opt.log_path + "'");
    if (fresh) log << kLossLogHeader << '\n';
  }
  const auto save = [&] {
    if (!opt.checkpoint_path.empty())
      nn::write_checkpoint(opt.checkpoint_path, model.params(),
                           with_scale_meta(opt.checkpoint_meta, opt.scale));
  };
  for (std::uint64_t it = model.params().step; it < cfg.total_iters; ++it) {
    const double lr = lr_schedule(it, cfg.lr0, cfg.halve_every);
    const auto rows = sampler.batch(it);
    const auto batch = make_batch(train, rows);
    const StepLosses losses = train_step(model, batch, cfg, lr);
    const std::uint64_t done = it + 1;
    if (is_validation_iter(cfg, done)) {
      LossRecord rec{done, lr, losses.loss_i, losses.loss_c, losses.total,
                     to_db(evaluate_nmse(model, val, opt.scale, cfg.eval_batch))};
      result.records.push_back(rec);
      if (log) log << format_record(rec) << '\n' << std::flush;
      if (opt.on_record) opt.on_record(rec);
    }
    if (opt.checkpoint_every && done % opt.checkpoint_every == 0) save();
  }
  save();
  result.final_val_nmse = evaluate_nmse(model, val, opt.scale, cfg.eval_batch);
  result.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

}  // namespace risce
