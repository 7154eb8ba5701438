#include "diffsolve/simd.hpp"

#if defined(__x86_64__) || defined(_M_X64)
#define DIFFSOLVE_HAVE_AVX2 1
#include <immintrin.h>

#include <cmath>
#endif

namespace diffsolve::simd {

#if DIFFSOLVE_HAVE_AVX2
namespace {

#define AVX2_FN __attribute__((target("avx2")))

// Tail loops repeat the scalar expressions verbatim so rounding matches.

AVX2_FN void axpby(double a, CSpan x, double b, CSpan y, MSpan out) {
  const std::size_t n = out.size();
  const __m256d va = _mm256_set1_pd(a);
  const __m256d vb = _mm256_set1_pd(b);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d ax = _mm256_mul_pd(va, _mm256_loadu_pd(&x[i]));
    const __m256d by = _mm256_mul_pd(vb, _mm256_loadu_pd(&y[i]));
    _mm256_storeu_pd(&out[i], _mm256_add_pd(ax, by));
  }
  for (; i < n; ++i) out[i] = a * x[i] + b * y[i];
}

AVX2_FN void axpbypcz(double a, CSpan x, double b, CSpan y, double c, CSpan z, MSpan out) {
  const std::size_t n = out.size();
  const __m256d va = _mm256_set1_pd(a);
  const __m256d vb = _mm256_set1_pd(b);
  const __m256d vc = _mm256_set1_pd(c);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d ax = _mm256_mul_pd(va, _mm256_loadu_pd(&x[i]));
    const __m256d by = _mm256_mul_pd(vb, _mm256_loadu_pd(&y[i]));
    const __m256d cz = _mm256_mul_pd(vc, _mm256_loadu_pd(&z[i]));
    _mm256_storeu_pd(&out[i], _mm256_add_pd(_mm256_add_pd(ax, by), cz));
  }
  for (; i < n; ++i) out[i] = (a * x[i] + b * y[i]) + c * z[i];
}

AVX2_FN void ddim_combine(double a, CSpan x0, double b, CSpan x, double c, MSpan out) {
  const std::size_t n = out.size();
  const __m256d va = _mm256_set1_pd(a);
  const __m256d vb = _mm256_set1_pd(b);
  const __m256d vc = _mm256_set1_pd(c);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d d = _mm256_loadu_pd(&x0[i]);
    const __m256d resid = _mm256_sub_pd(_mm256_loadu_pd(&x[i]), _mm256_mul_pd(vc, d));
    _mm256_storeu_pd(&out[i], _mm256_add_pd(_mm256_mul_pd(va, d), _mm256_mul_pd(vb, resid)));
  }
  for (; i < n; ++i) out[i] = a * x0[i] + b * (x[i] - c * x0[i]);
}

AVX2_FN void axpy(double a, CSpan x, MSpan y) {
  const std::size_t n = y.size();
  const __m256d va = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d ax = _mm256_mul_pd(va, _mm256_loadu_pd(&x[i]));
    _mm256_storeu_pd(&y[i], _mm256_add_pd(_mm256_loadu_pd(&y[i]), ax));
  }
  for (; i < n; ++i) y[i] = y[i] + a * x[i];
}

AVX2_FN void add(CSpan a, CSpan b, MSpan out) {
  const std::size_t n = out.size();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(&out[i], _mm256_add_pd(_mm256_loadu_pd(&a[i]), _mm256_loadu_pd(&b[i])));
  for (; i < n; ++i) out[i] = a[i] + b[i];
}

AVX2_FN void mul(CSpan a, CSpan b, MSpan out) {
  const std::size_t n = out.size();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(&out[i], _mm256_mul_pd(_mm256_loadu_pd(&a[i]), _mm256_loadu_pd(&b[i])));
  for (; i < n; ++i) out[i] = a[i] * b[i];
}

AVX2_FN double max_abs_diff(CSpan a, CSpan b) {
  const std::size_t n = a.size();
  const __m256d sign = _mm256_set1_pd(-0.0);
  __m256d vmax = _mm256_setzero_pd();
  __m256d unordered = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d d = _mm256_andnot_pd(sign, _mm256_sub_pd(_mm256_loadu_pd(&a[i]), _mm256_loadu_pd(&b[i])));
    unordered = _mm256_or_pd(unordered, _mm256_cmp_pd(d, d, _CMP_UNORD_Q));
    vmax = _mm256_max_pd(vmax, d);
  }
  if (_mm256_movemask_pd(unordered) != 0) return std::nan("");
  alignas(32) double lanes[4];
  _mm256_store_pd(lanes, vmax);
  double m = lanes[0];
  for (int k = 1; k < 4; ++k)
    if (lanes[k] > m) m = lanes[k];
  for (; i < n; ++i) {
    const double d = std::abs(a[i] - b[i]);
    if (std::isnan(d)) return d;
    if (d > m) m = d;
  }
  return m;
}

AVX2_FN bool all_finite(CSpan a) {
  const std::size_t n = a.size();
  __m256d bad = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d v = _mm256_loadu_pd(&a[i]);
    // inf - inf and nan - nan are both nan.
    const __m256d d = _mm256_sub_pd(v, v);
    bad = _mm256_or_pd(bad, _mm256_cmp_pd(d, d, _CMP_UNORD_Q));
  }
  if (_mm256_movemask_pd(bad) != 0) return false;
  for (; i < n; ++i)
    if (!std::isfinite(a[i])) return false;
  return true;
}

#undef AVX2_FN

}  // namespace

const KernelTable* avx2_kernels() {
  static const KernelTable table{Isa::Avx2, "avx2", axpby, axpbypcz, ddim_combine, axpy, add, mul, max_abs_diff,
                                 all_finite};
  static const bool supported = __builtin_cpu_supports("avx2");
  return supported ? &table : nullptr;
}

#else

const KernelTable* avx2_kernels() { return nullptr; }

#endif

}  // namespace diffsolve::simd
