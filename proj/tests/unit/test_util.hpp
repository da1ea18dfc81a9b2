#pragma once

#include <random>

#include "bnfree/tensor.hpp"

namespace bnfree::testing {

template <typename T = float>
BasicTensor<T> random_tensor(Shape s, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  BasicTensor<T> t(s);
  for (auto& v : t.data()) v = static_cast<T>(d(rng));
  return t;
}

}  // namespace bnfree::testing
