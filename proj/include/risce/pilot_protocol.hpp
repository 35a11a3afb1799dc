#pragma once

// Element-grouped pilot protocol: orthogonal group pilots, the expanded
// per-element training matrix, received-signal synthesis, the LS partial
// estimate and the exact leader/interference split of the cascaded channel.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <string>

#include "risce/complex_matrix.hpp"
#include "risce/error.hpp"

namespace risce {

struct GroupingConfig {
  std::size_t elements = 64;    // N
  std::size_t group_size = 1;   // K
  std::size_t pilot_length = 0; // T; 0 selects the minimum, T = N/K
  double power = 1.0;           // P (linear)
  double noise_variance = 0.0;  // sigma^2 (linear)

  std::size_t groups() const noexcept { return group_size ? elements / group_size : 0; }
  std::size_t slots() const noexcept { return pilot_length ? pilot_length : groups(); }

  double snr() const noexcept { return power / noise_variance; }

  void validate() const {
    detail::require(group_size >= 1 && elements >= 1 && elements % group_size == 0,
                    "GroupingConfig: K must divide N");
    detail::require(power > 0.0, "GroupingConfig: P must be positive");
    detail::require(noise_variance >= 0.0, "GroupingConfig: sigma^2 must be non-negative");
    if (slots() < groups())
      throw InsufficientPilotLength("GroupingConfig: pilot length T=" + std::to_string(slots()) +
                                    " is shorter than the group count " +
                                    std::to_string(groups()));
  }

  /// Unit-power configuration at the given SNR in dB.
  static GroupingConfig at_snr_db(std::size_t elements, std::size_t group_size, double snr_db,
                                  std::size_t pilot_length = 0) {
    GroupingConfig c;
    c.elements = elements;
    c.group_size = group_size;
    c.pilot_length = pilot_length;
    c.power = 1.0;
    c.noise_variance = std::pow(10.0, -snr_db / 10.0);
    return c;
  }
};

struct PilotMatrix {
  ComplexMatrix grouped;   // X~, N~ x T
  ComplexMatrix expanded;  // X,  N  x T
};

struct MeasurementRound {
  ComplexMatrix received;                // Y, M x T
  std::uint64_t noise_seed = 0;
  std::optional<ComplexMatrix> noise;    // N, kept only on request
};

struct GroupedChannels {
  ComplexMatrix leaders;     // A~, M x N~
  ComplexMatrix replicated;  // A-bar = A~ (x) 1_K^T, M x N
};

/// Truncated DFT pilot: row n, slot t is exp(-j 2 pi n t / T) / sqrt(T).
inline ComplexMatrix build_pilot(std::size_t groups, std::size_t slots) {
  detail::require(groups >= 1, "build_pilot: group count must be >= 1");
  if (slots < groups)
    throw InsufficientPilotLength("build_pilot: T=" + std::to_string(slots) + " < N~=" +
                                  std::to_string(groups));
  ComplexMatrix x(groups, slots);
  const double scale = 1.0 / std::sqrt(static_cast<double>(slots));
  for (std::size_t n = 0; n < groups; ++n)
    for (std::size_t t = 0; t < slots; ++t) {
      // reduce n*t mod T first so the phase argument stays small
      const auto idx = static_cast<double>((n * t) % slots);
      x(n, t) = std::polar(scale, -2.0 * std::numbers::pi * idx / static_cast<double>(slots));
    }
  return x;
}

/// X = X~ (x) 1_K: every group row is repeated K times.
inline ComplexMatrix expand_pilot(const ComplexMatrix& grouped, std::size_t group_size) {
  detail::require(group_size >= 1, "expand_pilot: K must be >= 1");
  ComplexMatrix x(grouped.rows() * group_size, grouped.cols());
  for (std::size_t n = 0; n < grouped.rows(); ++n)
    for (std::size_t k = 0; k < group_size; ++k)
      for (std::size_t t = 0; t < grouped.cols(); ++t)
        x(n * group_size + k, t) = grouped(n, t);
  return x;
}

inline PilotMatrix make_pilots(const GroupingConfig& config) {
  config.validate();
  PilotMatrix p;
  p.grouped = build_pilot(config.groups(), config.slots());
  p.expanded = expand_pilot(p.grouped, config.group_size);
  return p;
}

/// Replicate every column K times: M x N~ -> M x N~K.
inline ComplexMatrix expand_columns(const ComplexMatrix& partial, std::size_t group_size) {
  detail::require(group_size >= 1, "expand_columns: K must be >= 1");
  ComplexMatrix out(partial.rows(), partial.cols() * group_size);
  for (std::size_t m = 0; m < partial.rows(); ++m)
    for (std::size_t n = 0; n < partial.cols(); ++n)
      for (std::size_t k = 0; k < group_size; ++k)
        out(m, n * group_size + k) = partial(m, n);
  return out;
}

inline GroupedChannels grouped_channels(const ComplexMatrix& a, std::size_t group_size) {
  if (group_size == 0 || a.cols() % group_size != 0)
    throw InvalidArgument("grouped_channels: K must divide the column count");
  const std::size_t groups = a.cols() / group_size;
  ComplexMatrix leaders(a.rows(), groups);
  for (std::size_t m = 0; m < a.rows(); ++m)
    for (std::size_t n = 0; n < groups; ++n) leaders(m, n) = a(m, n * group_size);
  ComplexMatrix replicated = expand_columns(leaders, group_size);
  return {std::move(leaders), std::move(replicated)};
}

/// Intra-group interference V = A - A-bar; leader columns are exactly zero.
inline ComplexMatrix interference(const ComplexMatrix& a, std::size_t group_size) {
  return a - grouped_channels(a, group_size).replicated;
}

/// Y = sqrt(P) A X + N with i.i.d. CN(0, sigma^2) noise drawn from `seed`.
inline MeasurementRound simulate_rx(const ComplexMatrix& a, const ComplexMatrix& x, double power,
                                    double noise_variance, std::uint64_t seed,
                                    bool retain_noise = false) {
  detail::require(a.cols() == x.rows(), "simulate_rx: A.cols must equal X.rows");
  detail::require(power >= 0.0 && noise_variance >= 0.0,
                  "simulate_rx: power and noise variance must be non-negative");
  MeasurementRound round;
  round.noise_seed = seed;
  round.received = matmul(a, x);
  round.received *= std::sqrt(power);
  if (noise_variance > 0.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, std::sqrt(noise_variance / 2.0));
    ComplexMatrix n(a.rows(), x.cols());
    for (auto& v : n.data()) {
      const double re = normal(rng);
      const double im = normal(rng);
      v = {re, im};
    }
    round.received += n;
    if (retain_noise) round.noise = std::move(n);
  } else if (retain_noise) {
    round.noise = ComplexMatrix(a.rows(), x.cols());
  }
  return round;
}

/// LS partial estimate A~(0) = Y X~^H / (K sqrt(P)).
inline ComplexMatrix ls_estimate(const ComplexMatrix& y, const ComplexMatrix& grouped_pilot,
                                 std::size_t group_size, double power) {
  detail::require(power > 0.0, "ls_estimate: P must be positive");
  detail::require(group_size >= 1, "ls_estimate: K must be >= 1");
  detail::require(y.cols() == grouped_pilot.cols(), "ls_estimate: Y and X~ slot counts differ");
  ComplexMatrix est = matmul(y, adjoint(grouped_pilot));
  est *= 1.0 / (static_cast<double>(group_size) * std::sqrt(power));
  return est;
}

}  // namespace risce
