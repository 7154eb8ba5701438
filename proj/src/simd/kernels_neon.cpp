#include "diffsolve/simd.hpp"

#if defined(__aarch64__)
#include <arm_neon.h>

#include <cmath>
#endif

namespace diffsolve::simd {

#if defined(__aarch64__)
namespace {

// vmulq/vaddq only; vfmaq would change rounding relative to the scalar path.

void axpby(double a, CSpan x, double b, CSpan y, MSpan out) {
  const std::size_t n = out.size();
  const float64x2_t va = vdupq_n_f64(a);
  const float64x2_t vb = vdupq_n_f64(b);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const float64x2_t ax = vmulq_f64(va, vld1q_f64(&x[i]));
    const float64x2_t by = vmulq_f64(vb, vld1q_f64(&y[i]));
    vst1q_f64(&out[i], vaddq_f64(ax, by));
  }
  for (; i < n; ++i) out[i] = a * x[i] + b * y[i];
}

void axpbypcz(double a, CSpan x, double b, CSpan y, double c, CSpan z, MSpan out) {
  const std::size_t n = out.size();
  const float64x2_t va = vdupq_n_f64(a);
  const float64x2_t vb = vdupq_n_f64(b);
  const float64x2_t vc = vdupq_n_f64(c);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const float64x2_t ax = vmulq_f64(va, vld1q_f64(&x[i]));
    const float64x2_t by = vmulq_f64(vb, vld1q_f64(&y[i]));
    const float64x2_t cz = vmulq_f64(vc, vld1q_f64(&z[i]));
    vst1q_f64(&out[i], vaddq_f64(vaddq_f64(ax, by), cz));
  }
  for (; i < n; ++i) out[i] = (a * x[i] + b * y[i]) + c * z[i];
}

void ddim_combine(double a, CSpan x0, double b, CSpan x, double c, MSpan out) {
  const std::size_t n = out.size();
  const float64x2_t va = vdupq_n_f64(a);
  const float64x2_t vb = vdupq_n_f64(b);
  const float64x2_t vc = vdupq_n_f64(c);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const float64x2_t d = vld1q_f64(&x0[i]);
    const float64x2_t resid = vsubq_f64(vld1q_f64(&x[i]), vmulq_f64(vc, d));
    vst1q_f64(&out[i], vaddq_f64(vmulq_f64(va, d), vmulq_f64(vb, resid)));
  }
  for (; i < n; ++i) out[i] = a * x0[i] + b * (x[i] - c * x0[i]);
}

void axpy(double a, CSpan x, MSpan y) {
  const std::size_t n = y.size();
  const float64x2_t va = vdupq_n_f64(a);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(&y[i], vaddq_f64(vld1q_f64(&y[i]), vmulq_f64(va, vld1q_f64(&x[i]))));
  for (; i < n; ++i) y[i] = y[i] + a * x[i];
}

void add(CSpan a, CSpan b, MSpan out) {
  const std::size_t n = out.size();
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(&out[i], vaddq_f64(vld1q_f64(&a[i]), vld1q_f64(&b[i])));
  for (; i < n; ++i) out[i] = a[i] + b[i];
}

void mul(CSpan a, CSpan b, MSpan out) {
  const std::size_t n = out.size();
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(&out[i], vmulq_f64(vld1q_f64(&a[i]), vld1q_f64(&b[i])));
  for (; i < n; ++i) out[i] = a[i] * b[i];
}

double max_abs_diff(CSpan a, CSpan b) {
  double m = 0.0;
  const std::size_t n = a.size();
  std::size_t i = 0;
  float64x2_t vmax = vdupq_n_f64(0.0);
  for (; i + 2 <= n; i += 2) {
    const float64x2_t d = vabdq_f64(vld1q_f64(&a[i]), vld1q_f64(&b[i]));
    if (vgetq_lane_f64(d, 0) != vgetq_lane_f64(d, 0) || vgetq_lane_f64(d, 1) != vgetq_lane_f64(d, 1))
      return std::nan("");
    vmax = vmaxq_f64(vmax, d);
  }
  m = std::max(vgetq_lane_f64(vmax, 0), vgetq_lane_f64(vmax, 1));
  for (; i < n; ++i) {
    const double d = std::abs(a[i] - b[i]);
    if (std::isnan(d)) return d;
    if (d > m) m = d;
  }
  return m;
}

bool all_finite(CSpan a) {
  for (double v : a)
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace

const KernelTable* neon_kernels() {
  static const KernelTable table{Isa::Neon, "neon", axpby, axpbypcz, ddim_combine, axpy, add, mul, max_abs_diff,
                                 all_finite};
  return &table;
}

#else

const KernelTable* neon_kernels() { return nullptr; }

#endif

}  // namespace diffsolve::simd
