#include "bnfree/activation.hpp"

#include <cmath>

#include "bnfree/error.hpp"

namespace bnfree {
namespace {

// Applies f elementwise and records a backward that multiplies the upstream
// gradient by df evaluated at the saved input.
template <typename T, typename F, typename DF>
NodeId elementwise(Tape<T>& tape, NodeId x, F f, DF df) {
  const BasicTensor<T>& xv = tape.value(x);
  BasicTensor<T> out(xv.shape());
  for (int64_t i = 0; i < xv.size(); ++i) out[i] = f(xv[i]);
  return tape.record(std::move(out), {x}, [x, df](Tape<T>& t, NodeId self) {
    const BasicTensor<T>& xv = t.value(x);
    const BasicTensor<T>& dy = *t.grad(self);
    BasicTensor<T>& dx = t.grad_buffer(x);
    for (int64_t i = 0; i < xv.size(); ++i) dx[i] += dy[i] * df(xv[i]);
  });
}

template <typename T, typename F>
BasicTensor<T> map(const BasicTensor<T>& x, F f) {
  BasicTensor<T> out(x.shape());
  for (int64_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
  return out;
}

template <typename T>
T relu_f(T v) { return v > T{0} ? v : T{0}; }
template <typename T>
T relu_df(T v) { return v >= T{0} ? T{1} : T{0}; }

template <typename T>
T srelu_f(T v) { return v > T{-1} ? v : T{-1}; }
template <typename T>
T srelu_df(T v) { return v >= T{-1} ? T{1} : T{0}; }

template <typename T>
T elu_f(T v) { return v >= T{0} ? v : std::expm1(v); }
template <typename T>
T elu_df(T v) { return v >= T{0} ? T{1} : std::exp(v); }

void check_temperature(double temperature) {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw ShapeError("scale layer temperature must be a positive finite number");
  }
}

}  // namespace

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& x) { return map(x, relu_f<T>); }
template <typename T>
NodeId relu(Tape<T>& tape, NodeId x) { return elementwise(tape, x, relu_f<T>, relu_df<T>); }

template <typename T>
BasicTensor<T> srelu(const BasicTensor<T>& x) { return map(x, srelu_f<T>); }
template <typename T>
NodeId srelu(Tape<T>& tape, NodeId x) { return elementwise(tape, x, srelu_f<T>, srelu_df<T>); }

template <typename T>
BasicTensor<T> elu(const BasicTensor<T>& x) { return map(x, elu_f<T>); }
template <typename T>
NodeId elu(Tape<T>& tape, NodeId x) { return elementwise(tape, x, elu_f<T>, elu_df<T>); }

template <typename T>
BasicTensor<T> scale_layer(const BasicTensor<T>& x, double temperature) {
  check_temperature(temperature);
  const T t = static_cast<T>(temperature);
  return map(x, [t](T v) { return v / t; });
}

template <typename T>
NodeId scale_layer(Tape<T>& tape, NodeId x, double temperature) {
  check_temperature(temperature);
  const T t = static_cast<T>(temperature);
  return elementwise(tape, x, [t](T v) { return v / t; }, [t](T) { return T{1} / t; });
}

#define BNFREE_INSTANTIATE_ACT(T)                               \
  template BasicTensor<T> relu(const BasicTensor<T>&);          \
  template NodeId relu(Tape<T>&, NodeId);                       \
  template BasicTensor<T> srelu(const BasicTensor<T>&);         \
  template NodeId srelu(Tape<T>&, NodeId);                      \
  template BasicTensor<T> elu(const BasicTensor<T>&);           \
  template NodeId elu(Tape<T>&, NodeId);                        \
  template BasicTensor<T> scale_layer(const BasicTensor<T>&, double); \
  template NodeId scale_layer(Tape<T>&, NodeId, double);

BNFREE_INSTANTIATE_ACT(float)
BNFREE_INSTANTIATE_ACT(double)

}  // namespace bnfree
