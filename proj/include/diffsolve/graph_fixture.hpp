#pragma once

#include <cstdint>

#include "diffsolve/graph.hpp"
#include "diffsolve/schedule.hpp"

namespace diffsolve::graph {

struct FixtureOptions {
  std::size_t scene_dim = 32;  // flattened SceneLayout::compact()
  std::size_t embed_dim = 16;
  std::size_t hidden_dim = 24;
  std::size_t agents = 2;
  std::size_t horizon = 6;
  bool head_uses_context = true;
  VpSchedule schedule{};
  double t_start = kDefaultTStart;
  double t_end = kDefaultTEnd;

  std::size_t trajectory_dim() const { return agents * horizon * 4; }
};

inline constexpr std::size_t kMinCoreSize = 8;

// Monolithic graph with the sampling loop unrolled:
//   scene -> encoder (encoder_size nodes, ending in LayerNorm) -> "context_embedding"
//   n_copies weight-sharing core copies, copy i holding its timestep as a Constant;
//   first-order solver arithmetic (Mul, Mul, Add with float32 coefficients) between copies;
//   linear turn-indicator head (Concat, MatMul, Add) on the last copy's output.
// Inputs "scene" [1, scene_dim] and "x_init" [1, agents*horizon*4]; outputs
// "trajectory" and "turn_logits". encoder_size == 0 feeds "scene" straight to
// the copies. Throws std::invalid_argument for n_copies < 2 or
// core_size < kMinCoreSize.
Graph generate_unrolled_fixture(std::uint64_t seed, std::size_t n_copies, std::size_t encoder_size,
                                std::size_t core_size, const FixtureOptions& options = {});

inline std::size_t fixture_node_count(std::size_t n_copies, std::size_t encoder_size, std::size_t core_size) {
  return encoder_size + n_copies * core_size + 3 * (n_copies - 1) + 3;
}

}  // namespace diffsolve::graph
