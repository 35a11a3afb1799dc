#pragma once

// Narrowband geometric channel model for the RIS-assisted uplink.
//
// All steering exponents use the +j sign convention:
//   ULA  a_A(theta)[m]    = exp(+j 2 pi (d/lambda) m sin(theta))
//   UPA  a_R(az, el)      = a_el(el) (x) a_az(az, el)
//        a_el(el)[p]      = exp(+j 2 pi (d/lambda) p cos(el))          p < N_v
//        a_az(az, el)[q]  = exp(+j 2 pi (d/lambda) q sin(el) cos(az))  q < N_h
// so UPA entry p*N_h + q carries the combined phase of (p, q).

#include <cmath>
#include <cstddef>
#include <numbers>
#include <vector>

#include "risce/complex_matrix.hpp"
#include "risce/error.hpp"

namespace risce {

struct ArrayGeometry {
  std::size_t ap_antennas = 16;  // M
  std::size_t ris_rows = 8;      // N_v
  std::size_t ris_cols = 8;      // N_h
  double d_over_lambda = 0.5;

  std::size_t ris_elements() const noexcept { return ris_rows * ris_cols; }

  void validate() const {
    detail::require(ap_antennas >= 1, "ArrayGeometry: M must be >= 1");
    detail::require(ris_rows >= 1 && ris_cols >= 1, "ArrayGeometry: N_v, N_h must be >= 1");
    detail::require(d_over_lambda > 0.0 && std::isfinite(d_over_lambda),
                    "ArrayGeometry: d/lambda must be positive");
  }
};

struct Path {
  cplx gain{1.0, 0.0};
  double aoa_ap = 0.0;     // AP-side angle, only used by G paths
  double azimuth = 0.0;    // RIS azimuth, [-pi, pi)
  double elevation = 0.0;  // RIS elevation, [0, pi)
};

struct PathSet {
  std::vector<Path> paths;

  std::size_t count() const noexcept { return paths.size(); }

  void validate() const {
    detail::require(!paths.empty(), "PathSet: at least one path required");
    for (const auto& p : paths) {
      detail::require(std::isfinite(p.gain.real()) && std::isfinite(p.gain.imag()),
                      "PathSet: non-finite gain");
      detail::require(std::isfinite(p.aoa_ap) && std::isfinite(p.azimuth) &&
                          std::isfinite(p.elevation),
                      "PathSet: non-finite angle");
      detail::require(p.azimuth >= -std::numbers::pi && p.azimuth < std::numbers::pi,
                      "PathSet: azimuth outside [-pi, pi)");
      detail::require(p.elevation >= 0.0 && p.elevation < std::numbers::pi,
                      "PathSet: elevation outside [0, pi)");
    }
  }
};

namespace detail {
inline std::vector<cplx> phase_progression(std::size_t count, double step) {
  std::vector<cplx> out(count);
  for (std::size_t m = 0; m < count; ++m)
    out[m] = std::polar(1.0, step * static_cast<double>(m));
  return out;
}
}  // namespace detail

inline std::vector<cplx> ula_steering(double theta, std::size_t antennas, double d_over_lambda) {
  detail::require(antennas >= 1, "ula_steering: antenna count must be >= 1");
  return detail::phase_progression(antennas,
                                   2.0 * std::numbers::pi * d_over_lambda * std::sin(theta));
}

inline std::vector<cplx> upa_steering(double azimuth, double elevation, std::size_t rows,
                                      std::size_t cols, double d_over_lambda) {
  detail::require(rows >= 1 && cols >= 1, "upa_steering: element counts must be >= 1");
  const double k = 2.0 * std::numbers::pi * d_over_lambda;
  const auto el = detail::phase_progression(rows, k * std::cos(elevation));
  const auto az = detail::phase_progression(cols, k * std::sin(elevation) * std::cos(azimuth));
  std::vector<cplx> out(rows * cols);
  for (std::size_t p = 0; p < rows; ++p)
    for (std::size_t q = 0; q < cols; ++q) out[p * cols + q] = el[p] * az[q];
  return out;
}

/// RIS -> AP channel, G = sum_p gain_p a_A(aoa_p) a_R(az_p, el_p)^H  (M x N).
inline ComplexMatrix assemble_G(const ArrayGeometry& geom, const PathSet& paths) {
  geom.validate();
  paths.validate();
  const std::size_t m_count = geom.ap_antennas;
  const std::size_t n_count = geom.ris_elements();
  ComplexMatrix g(m_count, n_count);
  for (const auto& p : paths.paths) {
    const auto a_ap = ula_steering(p.aoa_ap, m_count, geom.d_over_lambda);
    const auto a_ris = upa_steering(p.azimuth, p.elevation, geom.ris_rows, geom.ris_cols,
                                    geom.d_over_lambda);
    for (std::size_t m = 0; m < m_count; ++m) {
      const cplx left = p.gain * a_ap[m];
      for (std::size_t n = 0; n < n_count; ++n) g(m, n) += left * std::conj(a_ris[n]);
    }
  }
  return g;
}

/// User -> RIS channel, h = sum_p gain_p a_R(az_p, el_p)  (N x 1).
inline ComplexMatrix assemble_h(const ArrayGeometry& geom, const PathSet& paths) {
  geom.validate();
  paths.validate();
  const std::size_t n_count = geom.ris_elements();
  ComplexMatrix h(n_count, 1);
  for (const auto& p : paths.paths) {
    const auto a_ris = upa_steering(p.azimuth, p.elevation, geom.ris_rows, geom.ris_cols,
                                    geom.d_over_lambda);
    for (std::size_t n = 0; n < n_count; ++n) h(n, 0) += p.gain * a_ris[n];
  }
  return h;
}

/// Cascaded channel A = G diag(h): column n is h_n * g_n.
inline ComplexMatrix cascade(const ComplexMatrix& g, const ComplexMatrix& h) {
  if (h.cols() != 1 || h.rows() != g.cols())
    throw InvalidArgument("cascade: h must be N x 1 with N = G.cols");
  ComplexMatrix a(g.rows(), g.cols());
  for (std::size_t m = 0; m < g.rows(); ++m)
    for (std::size_t n = 0; n < g.cols(); ++n) a(m, n) = g(m, n) * h(n, 0);
  return a;
}

}  // namespace risce
