#pragma once

#include <cstring>
#include <span>
#include <vector>

#include "risce/error.hpp"
#include "risce/nn/tensor.hpp"

namespace risce::nn {

inline void check_slope(double slope) {
  if (!(slope > 0.0 && slope < 1.0))
    throw InvalidArgument("lrelu: slope must lie in (0, 1)");
}

/// y = x for x >= 0, slope * x otherwise.
template <class T>
Tensor4<T> lrelu(const Tensor4<T>& input, T slope) {
  check_slope(static_cast<double>(slope));
  Tensor4<T> out(input.shape());
  const T* x = input.data();
  T* y = out.data();
  for (std::size_t i = 0; i < input.size(); ++i) y[i] = x[i] >= T(0) ? x[i] : slope * x[i];
  return out;
}

/// Gradient through lrelu given the pre-activation input.
template <class T>
Tensor4<T> lrelu_backward(const Tensor4<T>& input, const Tensor4<T>& grad_out, T slope) {
  check_slope(static_cast<double>(slope));
  if (input.shape() != grad_out.shape()) throw InvalidArgument("lrelu_backward: shape mismatch");
  Tensor4<T> g(input.shape());
  const T* x = input.data();
  const T* go = grad_out.data();
  T* gi = g.data();
  for (std::size_t i = 0; i < input.size(); ++i) gi[i] = x[i] >= T(0) ? go[i] : slope * go[i];
  return g;
}

/// Concatenates along the channel axis, preserving argument order.
template <class T>
Tensor4<T> concat_channels(std::span<const Tensor4<T>* const> parts) {
  if (parts.empty()) throw InvalidArgument("concat_channels: no inputs");
  const Shape4 first = parts.front()->shape();
  std::size_t channels = 0;
  for (const auto* p : parts) {
    const Shape4 s = p->shape();
    if (s.batch != first.batch || s.height != first.height || s.width != first.width)
      throw InvalidArgument("concat_channels: batch/spatial dimensions differ");
    channels += s.channels;
  }
  Tensor4<T> out({first.batch, channels, first.height, first.width});
  const std::size_t hw = first.plane();
  for (std::size_t b = 0; b < first.batch; ++b) {
    std::size_t offset = 0;
    for (const auto* p : parts) {
      std::memcpy(out.plane(b, offset), p->plane(b, 0), sizeof(T) * hw * p->channels());
      offset += p->channels();
    }
  }
  return out;
}

template <class T>
Tensor4<T> concat_channels(std::initializer_list<const Tensor4<T>*> parts) {
  std::vector<const Tensor4<T>*> v(parts);
  return concat_channels<T>(std::span<const Tensor4<T>* const>(v));
}

/// Backward of concat_channels: slices `grad` into pieces of the given
/// channel counts.
template <class T>
std::vector<Tensor4<T>> split_channels(const Tensor4<T>& grad, std::span<const std::size_t> counts) {
  std::size_t total = 0;
  for (auto c : counts) total += c;
  if (total != grad.channels()) throw InvalidArgument("split_channels: channel counts do not sum");
  std::vector<Tensor4<T>> out;
  out.reserve(counts.size());
  const std::size_t hw = grad.shape().plane();
  std::size_t offset = 0;
  for (auto c : counts) {
    Tensor4<T> part({grad.batch(), c, grad.height(), grad.width()});
    for (std::size_t b = 0; b < grad.batch(); ++b)
      std::memcpy(part.plane(b, 0), grad.plane(b, offset), sizeof(T) * hw * c);
    offset += c;
    out.push_back(std::move(part));
  }
  return out;
}

/// out = identity + beta * trunk. The backward pass is (g, beta * g).
template <class T>
Tensor4<T> scaled_residual_add(const Tensor4<T>& trunk, const Tensor4<T>& identity, T beta) {
  if (trunk.shape() != identity.shape())
    throw InvalidArgument("scaled_residual_add: shape mismatch");
  Tensor4<T> out(identity.shape());
  const T* t = trunk.data();
  const T* x = identity.data();
  T* y = out.data();
  for (std::size_t i = 0; i < out.size(); ++i) y[i] = x[i] + beta * t[i];
  return out;
}

template <class T>
void add_inplace(Tensor4<T>& acc, const Tensor4<T>& g) {
  if (acc.shape() != g.shape()) throw InvalidArgument("add_inplace: shape mismatch");
  T* a = acc.data();
  const T* b = g.data();
  for (std::size_t i = 0; i < acc.size(); ++i) a[i] += b[i];
}

template <class T>
void scale_inplace(Tensor4<T>& t, T s) {
  for (auto& v : t.storage()) v *= s;
}

/// Repeats every column K times along the width axis.
template <class T>
Tensor4<T> expand_width(const Tensor4<T>& in, std::size_t k) {
  if (k == 0) throw InvalidArgument("expand_width: K must be >= 1");
  Tensor4<T> out({in.batch(), in.channels(), in.height(), in.width() * k});
  for (std::size_t b = 0; b < in.batch(); ++b)
    for (std::size_t c = 0; c < in.channels(); ++c)
      for (std::size_t y = 0; y < in.height(); ++y)
        for (std::size_t x = 0; x < in.width(); ++x) {
          const T v = in(b, c, y, x);
          for (std::size_t j = 0; j < k; ++j) out(b, c, y, x * k + j) = v;
        }
  return out;
}

/// Adjoint of expand_width: sums each run of K columns.
template <class T>
Tensor4<T> expand_width_backward(const Tensor4<T>& grad, std::size_t k) {
  if (k == 0 || grad.width() % k != 0)
    throw InvalidArgument("expand_width_backward: K must divide the width");
  Tensor4<T> out({grad.batch(), grad.channels(), grad.height(), grad.width() / k});
  for (std::size_t b = 0; b < grad.batch(); ++b)
    for (std::size_t c = 0; c < grad.channels(); ++c)
      for (std::size_t y = 0; y < grad.height(); ++y)
        for (std::size_t x = 0; x < out.width(); ++x) {
          T s = T(0);
          for (std::size_t j = 0; j < k; ++j) s += grad(b, c, y, x * k + j);
          out(b, c, y, x) = s;
        }
  return out;
}

}  // namespace risce::nn
