#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace bnfree {

/// Extent of a 4-axis tensor laid out as (batch, rows, cols, channels).
/// Convolution filters reuse the same carrier as (R, S, Cin, Cout).
struct Shape {
  int64_t k = 1;
  int64_t h = 1;
  int64_t w = 1;
  int64_t c = 1;

  constexpr int64_t size() const { return k * h * w * c; }
  constexpr int64_t spatial() const { return h * w; }
  friend constexpr bool operator==(const Shape&, const Shape&) = default;
  std::string str() const;
};

/// Dense real-valued tensor in row-major (K, H, W, C) order.
template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;
  explicit BasicTensor(Shape shape, T fill = T{0});
  BasicTensor(Shape shape, std::vector<T> data);

  const Shape& shape() const { return shape_; }
  int64_t size() const { return static_cast<int64_t>(data_.size()); }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  T* ptr() { return data_.data(); }
  const T* ptr() const { return data_.data(); }

  T& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  T operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

  int64_t offset(int64_t k, int64_t h, int64_t w, int64_t c) const {
    return ((k * shape_.h + h) * shape_.w + w) * shape_.c + c;
  }
  T& at(int64_t k, int64_t h, int64_t w, int64_t c) { return data_[offset(k, h, w, c)]; }
  T at(int64_t k, int64_t h, int64_t w, int64_t c) const { return data_[offset(k, h, w, c)]; }

  /// False if any entry is NaN or infinite.
  bool all_finite() const;
  void fill(T value);

  /// Rows [first, first + count) along the batch axis.
  BasicTensor slice_batch(int64_t first, int64_t count) const;

  template <typename U>
  BasicTensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return BasicTensor<U>(shape_, std::move(out));
  }

  friend bool operator==(const BasicTensor&, const BasicTensor&) = default;

 private:
  Shape shape_{0, 0, 0, 0};
  std::vector<T> data_;
};

using Tensor = BasicTensor<float>;
using Tensor64 = BasicTensor<double>;

/// Largest |a - b| over all elements; shapes must match.
template <typename T>
double max_abs_diff(const BasicTensor<T>& a, const BasicTensor<T>& b);

extern template class BasicTensor<float>;
extern template class BasicTensor<double>;

}  // namespace bnfree
