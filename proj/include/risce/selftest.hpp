#pragma once

// Closed-form identities of the grouped pilot protocol, checked on random
// instances. Used by `risce selftest` and the acceptance binary.

#include <algorithm>
#include <random>

#include "risce/complex_matrix.hpp"
#include "risce/pilot_protocol.hpp"
#include "risce/seed.hpp"

namespace risce {

struct IdentityReport {
  std::size_t instances = 0;
  double pilot_orthonormality = 0.0;    // max |X~ X~^H - I|
  double pilot_cross = 0.0;             // max |X X~^H - I (x) 1_K|
  bool decomposition_exact = true;      // A == A-bar + V bitwise, integer-valued A
  bool leader_columns_zero = true;      // V is exactly zero on leader columns
  double decomposition_rel = 0.0;       // ||A - (A-bar + V)|| / ||A||, Gaussian A
  double reconstruction_rel = 0.0;      // recovery of A~ from Y with known V, N
  double ls_group_mean_rel = 0.0;       // noiseless LS vs. per-group column mean

  bool pass(double pilot_tol = 1e-10, double recon_tol = 1e-10, double ls_tol = 1e-12,
            double decomp_tol = 1e-15) const {
    return pilot_orthonormality <= pilot_tol && pilot_cross <= pilot_tol && decomposition_exact &&
           leader_columns_zero && decomposition_rel <= decomp_tol &&
           reconstruction_rel <= recon_tol && ls_group_mean_rel <= ls_tol;
  }
};

namespace detail {

inline ComplexMatrix gaussian_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  ComplexMatrix m(rows, cols);
  for (auto& v : m.data()) {
    const double re = n(rng);
    v = {re, n(rng)};
  }
  return m;
}

inline ComplexMatrix integer_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> u(-1000, 1000);
  ComplexMatrix m(rows, cols);
  for (auto& v : m.data()) {
    const double re = u(rng);
    v = {re, static_cast<double>(u(rng))};
  }
  return m;
}

inline double max_abs(const ComplexMatrix& a) {
  double d = 0.0;
  for (auto v : a.data()) d = std::max(d, std::abs(v));
  return d;
}

inline double rel(const ComplexMatrix& got, const ComplexMatrix& want) {
  return frobenius_norm(got - want) / std::max(frobenius_norm(want), 1e-300);
}

}  // namespace detail

/// Each instance draws M in [1, 8], K in {1, 2, 4, 8}, N~ in [1, 8],
/// T in [N~, N~ + 4], P in [0.1, 10] and sigma^2 in [0, 1].
inline IdentityReport run_identity_suite(std::size_t instances, std::uint64_t seed) {
  IdentityReport r;
  r.instances = instances;
  std::mt19937_64 rng(derive_seed(seed, {0x1D}));
  std::uniform_int_distribution<std::size_t> dim(1, 8), extra(0, 4), kexp(0, 3);
  std::uniform_real_distribution<double> pw(0.1, 10.0), nv(0.0, 1.0);
  for (std::size_t i = 0; i < instances; ++i) {
    const std::size_t m = dim(rng), groups = dim(rng), k = std::size_t{1} << kexp(rng);
    const std::size_t n = groups * k, t = groups + extra(rng);
    const double p = pw(rng), sigma2 = nv(rng);

    const auto xt = build_pilot(groups, t);
    const auto x = expand_pilot(xt, k);
    r.pilot_orthonormality = std::max(
        r.pilot_orthonormality,
        detail::max_abs(matmul(xt, adjoint(xt)) - ComplexMatrix::identity(groups)));
    const auto block = kron(ComplexMatrix::identity(groups), ones(k, 1));
    r.pilot_cross = std::max(r.pilot_cross, detail::max_abs(matmul(x, adjoint(xt)) - block));

    // integer-valued A: every subtraction and addition is exact
    const auto ai = detail::integer_matrix(m, n, rng);
    const auto vi = interference(ai, k);
    if (!(grouped_channels(ai, k).replicated + vi == ai)) r.decomposition_exact = false;
    for (std::size_t c = 0; c < n; c += k)
      for (std::size_t row = 0; row < m; ++row)
        if (vi(row, c) != cplx(0.0)) r.leader_columns_zero = false;

    const auto a = detail::gaussian_matrix(m, n, rng);
    const auto g = grouped_channels(a, k);
    const auto v = interference(a, k);
    r.decomposition_rel = std::max(r.decomposition_rel, detail::rel(g.replicated + v, a));

    // A~ = (Y X~^H - sqrt(P) V (I (x) 1_K) - N X~^H) / (K sqrt(P))
    const auto round = simulate_rx(a, x, p, sigma2, derive_seed(seed, {0x1E, i}), true);
    auto rec = matmul(round.received, adjoint(xt)) - matmul(v, block) * std::sqrt(p) -
               matmul(*round.noise, adjoint(xt));
    rec *= 1.0 / (static_cast<double>(k) * std::sqrt(p));
    r.reconstruction_rel = std::max(r.reconstruction_rel, detail::rel(rec, g.leaders));

    // noiseless LS against a direct column-mean loop
    const auto clean = simulate_rx(a, x, p, 0.0, 0).received;
    ComplexMatrix mean(m, groups);
    for (std::size_t row = 0; row < m; ++row)
      for (std::size_t gi = 0; gi < groups; ++gi) {
        cplx s = 0.0;
        for (std::size_t j = 0; j < k; ++j) s += a(row, gi * k + j);
        mean(row, gi) = s / static_cast<double>(k);
      }
    r.ls_group_mean_rel =
        std::max(r.ls_group_mean_rel, detail::rel(ls_estimate(clean, xt, k, p), mean));
  }
  return r;
}

}  // namespace risce
