#pragma once

// Central finite-difference checks against analytic gradients.

#include <algorithm>
#include <cmath>
#include <span>
#include <string>

namespace risce::nn {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::string worst_label;
  double max_abs_error = 0.0;     // max |numeric - analytic|
  double max_abs_analytic = 0.0;  // max |analytic|

  /// max |numeric - analytic| / max |analytic| over every checked entry.
  double max_norm_error() const {
    return max_abs_analytic > 0.0 ? max_abs_error / max_abs_analytic : max_abs_error;
  }

  void merge(const GradCheckReport& o, const std::string& label) {
    if (o.checked == 0) return;
    const std::size_t n = checked;
    const double abs_err = std::max(max_abs_error, o.max_abs_error);
    const double abs_an = std::max(max_abs_analytic, o.max_abs_analytic);
    if (n == 0 || o.max_rel_error > max_rel_error) {
      *this = o;
      worst_label = label;
    }
    checked = n + o.checked;
    max_abs_error = abs_err;
    max_abs_analytic = abs_an;
  }
};

/// Perturbs values[i] by +-eps for every i with i % stride == 0 and compares
/// (loss(+) - loss(-)) / (actual step) with analytic[i].
///
/// Per-entry error is |numeric - analytic| / max(|numeric|, |analytic|, floor)
/// with floor = floor_fraction * max|analytic| over the array, so entries
/// that are tiny relative to the array's largest gradient are judged on an
/// absolute scale instead of amplifying rounding noise.
template <class T, class Loss>
GradCheckReport check_gradient(std::span<T> values, std::span<const T> analytic, Loss&& loss,
                               double eps, std::size_t stride = 1,
                               double floor_fraction = 1e-2) {
  GradCheckReport r;
  double scale = 0.0;
  for (const T g : analytic) scale = std::max(scale, std::abs(static_cast<double>(g)));
  const double floor = std::max(floor_fraction * scale, 1e-12);
  for (std::size_t i = 0; i < values.size(); i += std::max<std::size_t>(stride, 1)) {
    const T orig = values[i];
    const T up = static_cast<T>(static_cast<double>(orig) + eps);
    const T down = static_cast<T>(static_cast<double>(orig) - eps);
    values[i] = up;
    const double lp = loss();
    values[i] = down;
    const double lm = loss();
    values[i] = orig;
    const double numeric = (lp - lm) / (static_cast<double>(up) - static_cast<double>(down));
    const double a = static_cast<double>(analytic[i]);
    const double diff = std::abs(numeric - a);
    const double err = diff / std::max({std::abs(numeric), std::abs(a), floor});
    r.max_abs_error = std::max(r.max_abs_error, diff);
    r.max_abs_analytic = std::max(r.max_abs_analytic, std::abs(a));
    if (err > r.max_rel_error || r.checked == 0) {
      r.max_rel_error = std::max(r.max_rel_error, err);
      r.worst_index = i;
      r.worst_analytic = a;
      r.worst_numeric = numeric;
    }
    ++r.checked;
  }
  return r;
}

}  // namespace risce::nn
