#pragma once

// Data-parallel inner loops used by the solvers and the graph interpreter.
//
// Every kernel has a scalar reference implementation and, where the target
// supports it, an AVX2 (x86-64) or NEON (aarch64) variant. The variant is
// chosen once at runtime from CPU feature detection and can be pinned with
// DIFFSOLVE_SIMD=scalar|avx2|neon. All kernels are elementwise (or, for
// max_abs_diff, order-insensitive), use no fused multiply-add, and so produce
// bit-identical results across variants.

#include <span>
#include <string_view>
#include <vector>

namespace diffsolve::simd {

enum class Isa { Scalar, Avx2, Neon };

using CSpan = std::span<const double>;
using MSpan = std::span<double>;

struct KernelTable {
  Isa isa;
  const char* name;
  // out = a*x + b*y
  void (*axpby)(double a, CSpan x, double b, CSpan y, MSpan out);
  // out = a*x + b*y + c*z
  void (*axpbypcz)(double a, CSpan x, double b, CSpan y, double c, CSpan z, MSpan out);
  // out = a*x0 + b*(x - c*x0)
  void (*ddim_combine)(double a, CSpan x0, double b, CSpan x, double c, MSpan out);
  // y += a*x
  void (*axpy)(double a, CSpan x, MSpan y);
  void (*add)(CSpan a, CSpan b, MSpan out);
  void (*mul)(CSpan a, CSpan b, MSpan out);
  // NaN if any difference is NaN.
  double (*max_abs_diff)(CSpan a, CSpan b);
  bool (*all_finite)(CSpan a);
};

const KernelTable& scalar_kernels();
// nullptr when not compiled in or not supported by the running CPU.
const KernelTable* avx2_kernels();
const KernelTable* neon_kernels();

// Every variant usable on this machine, scalar first.
std::vector<const KernelTable*> available_kernels();

// The active table. Selected on first use.
const KernelTable& kernels();

// Pins the active table; returns false if the ISA is unavailable.
bool select(Isa isa);
bool select(std::string_view name);

}  // namespace diffsolve::simd
