#pragma once

// Stride-1, zero "same"-padded 2-D convolution with exact gradients.
// Lowered to GEMM through an im2col buffer laid out as
// (in_ch * k_h * k_w) rows by (batch * H * W) columns, row-major.

#ifndef EIGEN_GEMM_TO_COEFFBASED_THRESHOLD
#define EIGEN_GEMM_TO_COEFFBASED_THRESHOLD 0
#endif
#include <Eigen/Core>
#include <algorithm>
#include <cstdlib>
#include <cstring>
#include <span>
#include <vector>

#include "risce/error.hpp"
#include "risce/nn/tensor.hpp"

namespace risce::nn {

struct ConvShape {
  std::size_t out_channels = 0;
  std::size_t in_channels = 0;
  std::size_t kernel_h = 3;
  std::size_t kernel_w = 3;

  std::size_t weight_count() const noexcept {
    return out_channels * in_channels * kernel_h * kernel_w;
  }
  std::size_t fan_in() const noexcept { return in_channels * kernel_h * kernel_w; }

  void validate() const {
    risce::detail::require(out_channels > 0 && in_channels > 0, "ConvShape: channel counts must be > 0");
    risce::detail::require(kernel_h % 2 == 1 && kernel_w % 2 == 1,
                    "ConvShape: kernel sizes must be odd for same padding");
  }

  friend bool operator==(const ConvShape&, const ConvShape&) = default;
};

/// Non-owning view of a convolution's weights (out, in, kh, kw) and bias (out).
template <class T>
struct ConvRef {
  ConvShape shape;
  std::span<const T> weight;
  std::span<const T> bias;
};

/// Owning convolution parameters.
template <class T>
struct ConvParams {
  ConvShape shape;
  std::vector<T> weight;
  std::vector<T> bias;

  ConvParams() = default;
  explicit ConvParams(ConvShape s)
      : shape(s), weight(s.weight_count(), T(0)), bias(s.out_channels, T(0)) {
    s.validate();
  }

  ConvRef<T> ref() const { return {shape, weight, bias}; }
};

template <class T>
struct ConvGrads {
  Tensor4<T> input;
  std::vector<T> weight;
  std::vector<T> bias;
};

namespace detail {

template <class T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MatMap = Eigen::Map<RowMatrix<T>>;
template <class T>
using ConstMatMap = Eigen::Map<const RowMatrix<T>>;

inline void check_ref_sizes(std::size_t weight, std::size_t bias, const ConvShape& s) {
  s.validate();
  if (weight != s.weight_count() || bias != s.out_channels)
    throw InvalidArgument("conv2d: parameter storage does not match its shape");
}

}  // namespace detail

namespace detail {

/// Flat index window of one kernel tap over an h x w plane. Entries in
/// [lo, hi) map to source index i + offset, except the wrapped columns.
struct TapWindow {
  std::ptrdiff_t lo = 0, hi = 0, offset = 0;
  std::ptrdiff_t row_lo = 0, row_hi = 0;  // rows with a valid source row
  std::ptrdiff_t wrap_left = 0, wrap_right = 0;  // columns per row to clear
  bool empty = true;
};

inline TapWindow tap_window(std::size_t ki, std::size_t kj, std::size_t kh, std::size_t kw,
                            std::size_t h, std::size_t w) {
  const auto sh = static_cast<std::ptrdiff_t>(h), sw = static_cast<std::ptrdiff_t>(w);
  const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(ki) - static_cast<std::ptrdiff_t>(kh / 2);
  const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(kj) - static_cast<std::ptrdiff_t>(kw / 2);
  TapWindow t;
  t.row_lo = std::max<std::ptrdiff_t>(0, -dy);
  t.row_hi = std::min<std::ptrdiff_t>(sh, sh - dy);
  t.empty = t.row_lo >= t.row_hi || std::abs(dx) >= sw;
  if (t.empty) return t;
  t.lo = t.row_lo * sw + std::max<std::ptrdiff_t>(0, -dx);
  t.hi = t.row_hi * sw - std::max<std::ptrdiff_t>(0, dx);
  t.offset = dy * sw + dx;
  t.wrap_left = std::max<std::ptrdiff_t>(0, -dx);
  t.wrap_right = std::max<std::ptrdiff_t>(0, dx);
  return t;
}

/// Zeroes the entries of `plane` whose tap falls outside the row.
template <class T>
void clear_wrapped(T* plane, const TapWindow& t, std::ptrdiff_t sw) {
  for (std::ptrdiff_t y = t.row_lo; y < t.row_hi; ++y) {
    T* r = plane + y * sw;
    for (std::ptrdiff_t x = 0; x < t.wrap_left; ++x) r[x] = T(0);
    for (std::ptrdiff_t x = sw - t.wrap_right; x < sw; ++x) r[x] = T(0);
  }
}

}  // namespace detail

/// Writes the im2col expansion of `in` into `col` starting at row offset 0.
/// `col` must hold in.channels()*kh*kw rows of batch*H*W entries.
template <class T>
void im2col(const Tensor4<T>& in, std::size_t kh, std::size_t kw, T* col) {
  const std::size_t batch = in.batch(), chans = in.channels(), h = in.height(), w = in.width();
  const std::size_t hw = h * w;
  const std::size_t row_len = batch * hw;
  const auto sw = static_cast<std::ptrdiff_t>(w);
  for (std::size_t ki = 0; ki < kh; ++ki)
    for (std::size_t kj = 0; kj < kw; ++kj) {
      const detail::TapWindow t = detail::tap_window(ki, kj, kh, kw, h, w);
      for (std::size_t c = 0; c < chans; ++c) {
        T* row = col + ((c * kh + ki) * kw + kj) * row_len;
        if (t.empty) {
          std::memset(row, 0, sizeof(T) * row_len);
          continue;
        }
        for (std::size_t b = 0; b < batch; ++b) {
          const T* src = in.plane(b, c);
          T* dst = row + b * hw;
          std::memset(dst, 0, sizeof(T) * static_cast<std::size_t>(t.lo));
          std::memcpy(dst + t.lo, src + t.lo + t.offset,
                      sizeof(T) * static_cast<std::size_t>(t.hi - t.lo));
          std::memset(dst + t.hi, 0, sizeof(T) * (hw - static_cast<std::size_t>(t.hi)));
          detail::clear_wrapped(dst, t, sw);
        }
      }
    }
}

/// Adjoint of im2col: accumulates `col` back into `grad_in`. Entries of
/// `col` that correspond to padding are overwritten with zero.
template <class T>
void col2im_add(T* col, std::size_t kh, std::size_t kw, Tensor4<T>& grad_in) {
  const std::size_t batch = grad_in.batch(), chans = grad_in.channels(), h = grad_in.height(),
                    w = grad_in.width();
  const std::size_t hw = h * w;
  const std::size_t row_len = batch * hw;
  const auto sw = static_cast<std::ptrdiff_t>(w);
  for (std::size_t ki = 0; ki < kh; ++ki)
    for (std::size_t kj = 0; kj < kw; ++kj) {
      const detail::TapWindow t = detail::tap_window(ki, kj, kh, kw, h, w);
      if (t.empty) continue;
      for (std::size_t c = 0; c < chans; ++c) {
        T* row = col + ((c * kh + ki) * kw + kj) * row_len;
        for (std::size_t b = 0; b < batch; ++b) {
          T* src = row + b * hw;
          detail::clear_wrapped(src, t, sw);
          T* dst = grad_in.plane(b, c);
          for (std::ptrdiff_t i = t.lo; i < t.hi; ++i) dst[i + t.offset] += src[i];
        }
      }
    }
}

/// out = W * col + bias, written as NCHW. `col` has shape.fan_in() rows.
template <class T>
void conv_from_columns(const T* col, const ConvRef<T>& p, Shape4 out_shape, Tensor4<T>& out,
                       std::vector<T>& scratch) {
  const std::size_t hw = out_shape.plane();
  const std::size_t n = out_shape.batch * hw;
  const std::size_t rows = p.shape.fan_in();
  scratch.resize(p.shape.out_channels * n);
  detail::MatMap<T> result(scratch.data(), static_cast<Eigen::Index>(p.shape.out_channels),
                           static_cast<Eigen::Index>(n));
  detail::ConstMatMap<T> w(p.weight.data(), static_cast<Eigen::Index>(p.shape.out_channels),
                           static_cast<Eigen::Index>(rows));
  detail::ConstMatMap<T> c(col, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(n));
  result.noalias() = w * c;
  out = Tensor4<T>(out_shape);
  for (std::size_t b = 0; b < out_shape.batch; ++b)
    for (std::size_t o = 0; o < out_shape.channels; ++o) {
      const T* src = scratch.data() + o * n + b * hw;
      T* dst = out.plane(b, o);
      const T bias = p.bias[o];
      for (std::size_t i = 0; i < hw; ++i) dst[i] = src[i] + bias;
    }
}

/// Gathers an NCHW gradient into the (out_ch x batch*H*W) GEMM layout.
template <class T>
void gather_channels(const Tensor4<T>& g, std::vector<T>& dst) {
  const std::size_t hw = g.shape().plane();
  const std::size_t n = g.batch() * hw;
  dst.resize(g.channels() * n);
  for (std::size_t b = 0; b < g.batch(); ++b)
    for (std::size_t o = 0; o < g.channels(); ++o)
      std::memcpy(dst.data() + o * n + b * hw, g.plane(b, o), sizeof(T) * hw);
}

/// Accumulates dW += G col^T and db += rowsum(G); writes grad_col = W^T G.
/// `g_mat` is out_ch x (batch*H*W). grad_col may be null when the input
/// gradient is not needed.
template <class T>
void conv_backward_columns(const T* col, const ConvRef<T>& p, const T* g_mat, std::size_t n,
                           std::span<T> grad_weight, std::span<T> grad_bias, T* grad_col,
                           bool accumulate_col = false) {
  const auto out_ch = static_cast<Eigen::Index>(p.shape.out_channels);
  const auto rows = static_cast<Eigen::Index>(p.shape.fan_in());
  const auto cols = static_cast<Eigen::Index>(n);
  detail::ConstMatMap<T> g(g_mat, out_ch, cols);
  detail::ConstMatMap<T> c(col, rows, cols);
  detail::MatMap<T> gw(grad_weight.data(), out_ch, rows);
  gw.noalias() += g * c.transpose();
  // Plain loop: Eigen's reductions peel by address, which makes the sum
  // order depend on where the buffer landed.
  for (std::size_t o = 0; o < grad_bias.size(); ++o) {
    const T* row = g_mat + o * n;
    T s = T(0);
    for (std::size_t i = 0; i < n; ++i) s += row[i];
    grad_bias[o] += s;
  }
  if (grad_col != nullptr) {
    detail::ConstMatMap<T> w(p.weight.data(), out_ch, rows);
    detail::MatMap<T> gc(grad_col, rows, cols);
    if (accumulate_col)
      gc.noalias() += w.transpose() * g;
    else
      gc.noalias() = w.transpose() * g;
  }
}

template <class T>
Tensor4<T> conv2d_forward(const Tensor4<T>& input, const ConvRef<T>& params) {
  detail::check_ref_sizes(params.weight.size(), params.bias.size(), params.shape);
  if (input.channels() != params.shape.in_channels)
    throw InvalidArgument("conv2d_forward: input has " + std::to_string(input.channels()) +
                          " channels, kernel expects " + std::to_string(params.shape.in_channels));
  const Shape4 out_shape{input.batch(), params.shape.out_channels, input.height(), input.width()};
  std::vector<T> col(params.shape.fan_in() * input.batch() * input.shape().plane());
  im2col(input, params.shape.kernel_h, params.shape.kernel_w, col.data());
  std::vector<T> scratch;
  Tensor4<T> out;
  conv_from_columns(col.data(), params, out_shape, out, scratch);
  return out;
}

template <class T>
Tensor4<T> conv2d_forward(const Tensor4<T>& input, const ConvParams<T>& params) {
  return conv2d_forward(input, params.ref());
}

/// Backward pass accumulating parameter gradients into the given spans and
/// returning the input gradient.
template <class T>
Tensor4<T> conv2d_backward_into(const Tensor4<T>& input, const ConvRef<T>& params,
                                const Tensor4<T>& grad_out, std::span<T> grad_weight,
                                std::span<T> grad_bias) {
  detail::check_ref_sizes(params.weight.size(), params.bias.size(), params.shape);
  const Shape4 out_shape{input.batch(), params.shape.out_channels, input.height(), input.width()};
  if (input.channels() != params.shape.in_channels || grad_out.shape() != out_shape)
    throw InvalidArgument("conv2d_backward: shape mismatch");
  if (grad_weight.size() != params.weight.size() || grad_bias.size() != params.bias.size())
    throw InvalidArgument("conv2d_backward: gradient storage mismatch");
  const std::size_t n = input.batch() * input.shape().plane();
  std::vector<T> col(params.shape.fan_in() * n);
  im2col(input, params.shape.kernel_h, params.shape.kernel_w, col.data());
  std::vector<T> g;
  gather_channels(grad_out, g);
  std::vector<T> grad_col(col.size());
  conv_backward_columns(col.data(), params, g.data(), n, grad_weight, grad_bias, grad_col.data());
  Tensor4<T> grad_in(input.shape());
  col2im_add(grad_col.data(), params.shape.kernel_h, params.shape.kernel_w, grad_in);
  return grad_in;
}

template <class T>
ConvGrads<T> conv2d_backward(const Tensor4<T>& input, const ConvRef<T>& params,
                             const Tensor4<T>& grad_out) {
  ConvGrads<T> grads;
  grads.weight.assign(params.weight.size(), T(0));
  grads.bias.assign(params.bias.size(), T(0));
  grads.input = conv2d_backward_into<T>(input, params, grad_out, grads.weight, grads.bias);
  return grads;
}

template <class T>
ConvGrads<T> conv2d_backward(const Tensor4<T>& input, const ConvParams<T>& params,
                             const Tensor4<T>& grad_out) {
  return conv2d_backward(input, params.ref(), grad_out);
}

}  // namespace risce::nn
