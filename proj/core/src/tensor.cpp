#include "bnfree/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "bnfree/error.hpp"

namespace bnfree {

std::string Shape::str() const {
  std::ostringstream os;
  os << k << "x" << h << "x" << w << "x" << c;
  return os.str();
}

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, T fill) : shape_(shape) {
  if (shape.k < 0 || shape.h < 0 || shape.w < 0 || shape.c < 0) {
    throw ShapeError("negative tensor extent " + shape.str());
  }
  data_.assign(static_cast<size_t>(shape.size()), fill);
}

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, std::vector<T> data)
    : shape_(shape), data_(std::move(data)) {
  if (static_cast<int64_t>(data_.size()) != shape.size()) {
    throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                     " does not match shape " + shape.str());
  }
}

template <typename T>
bool BasicTensor<T>::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
}

template <typename T>
void BasicTensor<T>::fill(T value) {
  std::fill(data_.begin(), data_.end(), value);
}

template <typename T>
BasicTensor<T> BasicTensor<T>::slice_batch(int64_t first, int64_t count) const {
  if (first < 0 || count < 0 || first + count > shape_.k) {
    throw ShapeError("batch slice out of range");
  }
  Shape s = shape_;
  s.k = count;
  const int64_t stride = shape_.h * shape_.w * shape_.c;
  std::vector<T> out(data_.begin() + first * stride, data_.begin() + (first + count) * stride);
  return BasicTensor<T>(s, std::move(out));
}

template <typename T>
double max_abs_diff(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("max_abs_diff shape mismatch " + a.shape().str() + " vs " + b.shape().str());
  }
  double m = 0.0;
  for (int64_t i = 0; i < a.size(); ++i) {
    m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
  }
  return m;
}

template class BasicTensor<float>;
template class BasicTensor<double>;
template double max_abs_diff(const BasicTensor<float>&, const BasicTensor<float>&);
template double max_abs_diff(const BasicTensor<double>&, const BasicTensor<double>&);

}  // namespace bnfree
