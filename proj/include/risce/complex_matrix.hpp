#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "risce/error.hpp"

namespace risce {

using cplx = std::complex<double>;

/// Dense complex matrix, row-major. Carries every channel quantity
/// (G, h as N x 1, A, grouped/interference matrices, pilots, received
/// signals).
class ComplexMatrix {
 public:
  ComplexMatrix() = default;

  ComplexMatrix(std::size_t rows, std::size_t cols)
      : rows_(rows), cols_(cols), data_(rows * cols) {
    detail::require(rows > 0 && cols > 0, "ComplexMatrix: dimensions must be positive");
  }

  ComplexMatrix(std::size_t rows, std::size_t cols, std::vector<cplx> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    detail::require(rows > 0 && cols > 0, "ComplexMatrix: dimensions must be positive");
    detail::require(data_.size() == rows * cols,
                    "ComplexMatrix: data length does not match rows*cols");
  }

  /// Column vector (n x 1).
  static ComplexMatrix column(std::vector<cplx> values) {
    const std::size_t n = values.size();
    return ComplexMatrix(n, 1, std::move(values));
  }

  static ComplexMatrix identity(std::size_t n) {
    ComplexMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  cplx& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  const cplx& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<cplx> data() noexcept { return data_; }
  std::span<const cplx> data() const noexcept { return data_; }

  std::vector<cplx> col(std::size_t c) const {
    std::vector<cplx> out(rows_);
    for (std::size_t r = 0; r < rows_; ++r) out[r] = (*this)(r, c);
    return out;
  }

  void set_col(std::size_t c, std::span<const cplx> values) {
    detail::require(values.size() == rows_, "set_col: length mismatch");
    for (std::size_t r = 0; r < rows_; ++r) (*this)(r, c) = values[r];
  }

  ComplexMatrix& operator+=(const ComplexMatrix& other) {
    check_same_shape(other, "operator+=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
    return *this;
  }

  ComplexMatrix& operator-=(const ComplexMatrix& other) {
    check_same_shape(other, "operator-=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
    return *this;
  }

  ComplexMatrix& operator*=(cplx s) {
    for (auto& v : data_) v *= s;
    return *this;
  }

  friend ComplexMatrix operator+(ComplexMatrix a, const ComplexMatrix& b) { return a += b; }
  friend ComplexMatrix operator-(ComplexMatrix a, const ComplexMatrix& b) { return a -= b; }
  friend ComplexMatrix operator*(ComplexMatrix a, cplx s) { return a *= s; }
  friend ComplexMatrix operator*(cplx s, ComplexMatrix a) { return a *= s; }

  friend bool operator==(const ComplexMatrix& a, const ComplexMatrix& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

  bool all_finite() const noexcept {
    for (const auto& v : data_)
      if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) return false;
    return true;
  }

  void check_same_shape(const ComplexMatrix& other, const char* where) const {
    if (rows_ != other.rows_ || cols_ != other.cols_)
      throw InvalidArgument(std::string(where) + ": shape mismatch");
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<cplx> data_;
};

inline ComplexMatrix matmul(const ComplexMatrix& a, const ComplexMatrix& b) {
  detail::require(a.cols() == b.rows(), "matmul: inner dimensions differ");
  ComplexMatrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const cplx aik = a(i, k);
      for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += aik * b(k, j);
    }
  return out;
}

/// Conjugate transpose.
inline ComplexMatrix adjoint(const ComplexMatrix& a) {
  ComplexMatrix out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = std::conj(a(i, j));
  return out;
}

inline ComplexMatrix kron(const ComplexMatrix& a, const ComplexMatrix& b) {
  ComplexMatrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j)
      for (std::size_t p = 0; p < b.rows(); ++p)
        for (std::size_t q = 0; q < b.cols(); ++q)
          out(i * b.rows() + p, j * b.cols() + q) = a(i, j) * b(p, q);
  return out;
}

/// All-ones matrix, used for the 1_K and 1_K^T replication factors.
inline ComplexMatrix ones(std::size_t rows, std::size_t cols) {
  return ComplexMatrix(rows, cols, std::vector<cplx>(rows * cols, cplx(1.0, 0.0)));
}

inline double frobenius_norm_sq(const ComplexMatrix& a) {
  double s = 0.0;
  for (const auto& v : a.data()) s += std::norm(v);
  return s;
}

inline double frobenius_norm(const ComplexMatrix& a) { return std::sqrt(frobenius_norm_sq(a)); }

inline ComplexMatrix diag(std::span<const cplx> values) {
  ComplexMatrix out(values.size(), values.size());
  for (std::size_t i = 0; i < values.size(); ++i) out(i, i) = values[i];
  return out;
}

}  // namespace risce
