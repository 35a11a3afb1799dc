#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "risce/error.hpp"

namespace risce::nn {

struct Shape4 {
  std::size_t batch = 0;
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;

  std::size_t plane() const noexcept { return height * width; }
  std::size_t count() const noexcept { return batch * channels * height * width; }

  friend bool operator==(const Shape4&, const Shape4&) = default;

  std::string str() const {
    return "(" + std::to_string(batch) + "," + std::to_string(channels) + "," +
           std::to_string(height) + "," + std::to_string(width) + ")";
  }
};

/// Dense NCHW tensor.
template <class T>
class Tensor4 {
 public:
  using value_type = T;

  Tensor4() = default;
  explicit Tensor4(Shape4 shape, T fill = T(0)) : shape_(shape), data_(shape.count(), fill) {}
  Tensor4(Shape4 shape, std::vector<T> data) : shape_(shape), data_(std::move(data)) {
    if (data_.size() != shape_.count())
      throw InvalidArgument("Tensor4: data length does not match shape " + shape_.str());
  }

  const Shape4& shape() const noexcept { return shape_; }
  std::size_t batch() const noexcept { return shape_.batch; }
  std::size_t channels() const noexcept { return shape_.channels; }
  std::size_t height() const noexcept { return shape_.height; }
  std::size_t width() const noexcept { return shape_.width; }
  std::size_t size() const noexcept { return data_.size(); }

  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }
  std::span<T> span() noexcept { return data_; }
  std::span<const T> span() const noexcept { return data_; }
  std::vector<T>& storage() noexcept { return data_; }
  const std::vector<T>& storage() const noexcept { return data_; }

  std::size_t index(std::size_t b, std::size_t c, std::size_t y, std::size_t x) const noexcept {
    return ((b * shape_.channels + c) * shape_.height + y) * shape_.width + x;
  }
  T& operator()(std::size_t b, std::size_t c, std::size_t y, std::size_t x) noexcept {
    return data_[index(b, c, y, x)];
  }
  const T& operator()(std::size_t b, std::size_t c, std::size_t y, std::size_t x) const noexcept {
    return data_[index(b, c, y, x)];
  }

  /// Pointer to the (b, c) feature plane.
  T* plane(std::size_t b, std::size_t c) noexcept { return data_.data() + index(b, c, 0, 0); }
  const T* plane(std::size_t b, std::size_t c) const noexcept {
    return data_.data() + index(b, c, 0, 0);
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  bool all_finite() const noexcept {
    for (const T v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  friend bool operator==(const Tensor4& a, const Tensor4& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape4 shape_{};
  std::vector<T> data_;
};

}  // namespace risce::nn
