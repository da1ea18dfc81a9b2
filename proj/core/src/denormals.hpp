#pragma once

#if defined(__SSE__) || defined(_M_X64)
#include <xmmintrin.h>
#define BNFREE_HAS_MXCSR 1
#endif

namespace bnfree::detail {

/// Flushes denormal floats to zero on this thread for the guard's lifetime.
class FlushDenormals {
 public:
#ifdef BNFREE_HAS_MXCSR
  FlushDenormals() : saved_(_mm_getcsr()) { _mm_setcsr(saved_ | 0x8040u); }
  ~FlushDenormals() { _mm_setcsr(saved_); }

 private:
  unsigned saved_;
#else
  FlushDenormals() = default;
#endif

 public:
  FlushDenormals(const FlushDenormals&) = delete;
  FlushDenormals& operator=(const FlushDenormals&) = delete;
};

}  // namespace bnfree::detail
