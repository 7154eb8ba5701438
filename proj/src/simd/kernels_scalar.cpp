#include <cmath>

#include "diffsolve/simd.hpp"

namespace diffsolve::simd {
namespace {

void axpby(double a, CSpan x, double b, CSpan y, MSpan out) {
  const std::size_t n = out.size();
  for (std::size_t i = 0; i < n; ++i) out[i] = a * x[i] + b * y[i];
}

void axpbypcz(double a, CSpan x, double b, CSpan y, double c, CSpan z, MSpan out) {
  const std::size_t n = out.size();
  for (std::size_t i = 0; i < n; ++i) out[i] = (a * x[i] + b * y[i]) + c * z[i];
}

void ddim_combine(double a, CSpan x0, double b, CSpan x, double c, MSpan out) {
  const std::size_t n = out.size();
  for (std::size_t i = 0; i < n; ++i) out[i] = a * x0[i] + b * (x[i] - c * x0[i]);
}

void axpy(double a, CSpan x, MSpan y) {
  const std::size_t n = y.size();
  for (std::size_t i = 0; i < n; ++i) y[i] = y[i] + a * x[i];
}

void add(CSpan a, CSpan b, MSpan out) {
  const std::size_t n = out.size();
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

void mul(CSpan a, CSpan b, MSpan out) {
  const std::size_t n = out.size();
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

double max_abs_diff(CSpan a, CSpan b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
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

const KernelTable& scalar_kernels() {
  static const KernelTable table{Isa::Scalar, "scalar", axpby, axpbypcz, ddim_combine, axpy, add, mul, max_abs_diff,
                                 all_finite};
  return table;
}

}  // namespace diffsolve::simd
