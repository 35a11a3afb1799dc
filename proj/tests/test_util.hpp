#pragma once

#include <complex>
#include <random>

#include "risce/complex_matrix.hpp"

namespace risce::test {

inline ComplexMatrix random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  ComplexMatrix m(rows, cols);
  for (auto& v : m.data()) {
    const double re = n(rng);
    const double im = n(rng);
    v = {re, im};
  }
  return m;
}

inline double max_abs_diff(const ComplexMatrix& a, const ComplexMatrix& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a.data()[i] - b.data()[i]));
  return d;
}

inline double relative_error(const ComplexMatrix& a, const ComplexMatrix& b) {
  return frobenius_norm(a - b) / std::max(frobenius_norm(b), 1e-300);
}

}  // namespace risce::test
