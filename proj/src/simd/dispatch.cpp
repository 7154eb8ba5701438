#include <atomic>
#include <cstdlib>
#include <string>

#include "diffsolve/simd.hpp"

namespace diffsolve::simd {
namespace {

const KernelTable* best_available() {
  if (const KernelTable* t = avx2_kernels()) return t;
  if (const KernelTable* t = neon_kernels()) return t;
  return &scalar_kernels();
}

const KernelTable* initial_selection() {
  if (const char* env = std::getenv("DIFFSOLVE_SIMD")) {
    const std::string want(env);
    for (const KernelTable* t : available_kernels())
      if (want == t->name) return t;
  }
  return best_available();
}

std::atomic<const KernelTable*>& active() {
  static std::atomic<const KernelTable*> table{initial_selection()};
  return table;
}

}  // namespace

std::vector<const KernelTable*> available_kernels() {
  std::vector<const KernelTable*> out{&scalar_kernels()};
  if (const KernelTable* t = avx2_kernels()) out.push_back(t);
  if (const KernelTable* t = neon_kernels()) out.push_back(t);
  return out;
}

const KernelTable& kernels() { return *active().load(std::memory_order_acquire); }

bool select(Isa isa) {
  for (const KernelTable* t : available_kernels()) {
    if (t->isa == isa) {
      active().store(t, std::memory_order_release);
      return true;
    }
  }
  return false;
}

bool select(std::string_view name) {
  for (const KernelTable* t : available_kernels()) {
    if (name == t->name) {
      active().store(t, std::memory_order_release);
      return true;
    }
  }
  return false;
}

}  // namespace diffsolve::simd
