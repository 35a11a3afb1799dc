#pragma once

#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "risce/complex_matrix.hpp"
#include "risce/error.hpp"
#include "risce/models.hpp"
#include "risce/nn/tensor.hpp"

namespace risce {

/// Reported in place of -inf dB for exact recovery.
inline constexpr double kNmseFloorDb = -400.0;

/// ||truth - estimate||_F^2 / ||truth||_F^2.
inline double nmse(const ComplexMatrix& truth, const ComplexMatrix& estimate) {
  truth.check_same_shape(estimate, "nmse");
  const double den = frobenius_norm_sq(truth);
  if (!(den > 0.0)) throw InvalidArgument("nmse: reference channel has zero power");
  return frobenius_norm_sq(truth - estimate) / den;
}

/// Mean of per-sample ratios.
inline double mean_nmse(std::span<const ComplexMatrix> truth, std::span<const ComplexMatrix> est) {
  if (truth.size() != est.size() || truth.empty())
    throw InvalidArgument("mean_nmse: sets must be non-empty and equally sized");
  double s = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) s += nmse(truth[i], est[i]);
  return s / static_cast<double>(truth.size());
}

inline double to_db(double ratio) {
  if (ratio <= 0.0) return kNmseFloorDb;
  return std::max(kNmseFloorDb, 10.0 * std::log10(ratio));
}

/// LS extrapolation baseline: a0 (x) 1_K^T.
inline ComplexMatrix baseline_ls(const ComplexMatrix& a0, std::size_t group_size) {
  return expand_partial(a0, group_size);
}

/// Sum over the batch of per-sample NMSE between two 2-channel tensors,
/// accumulated in double. `inv_scale` de-normalises both sides first.
template <class T>
double nmse_sum(const nn::Tensor4<T>& truth, const nn::Tensor4<T>& estimate,
                double inv_scale = 1.0) {
  if (truth.shape() != estimate.shape()) throw InvalidArgument("nmse_sum: shape mismatch");
  const std::size_t per = truth.channels() * truth.shape().plane();
  double total = 0.0;
  for (std::size_t b = 0; b < truth.batch(); ++b) {
    const T* t = truth.data() + b * per;
    const T* e = estimate.data() + b * per;
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < per; ++i) {
      const double tv = static_cast<double>(t[i]) * inv_scale;
      const double d = tv - static_cast<double>(e[i]) * inv_scale;
      num += d * d;
      den += tv * tv;
    }
    if (!(den > 0.0)) throw InvalidArgument("nmse: reference channel has zero power");
    total += num / den;
  }
  return total;
}

}  // namespace risce
