#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "diffsolve/denoiser.hpp"
#include "diffsolve/encoder_cache.hpp"
#include "diffsolve/schedule.hpp"
#include "diffsolve/solvers.hpp"
#include "diffsolve/trace.hpp"

namespace diffsolve {

inline constexpr std::size_t kMinSteps = 1;
inline constexpr std::size_t kMaxSteps = 50;

// x_phys = x_norm * sigma + mean on the position channels; heading channels
// only get the mean added.
struct Normalization {
  double sigma = 20.0;
  std::array<double, kStateDim> mean{0.0, 0.0, 0.0, 0.0};

  double scale(std::size_t channel) const { return channel < 2 ? sigma : 1.0; }
};

// Trajectory slots overwritten after every solver update. Values are in
// normalized units, kStateDim per slot; left empty they are read from the
// scene's latest history row (ego history for agent 0, neighbor tracks else).
struct AnchorSpec {
  struct Slot {
    std::size_t agent;
    std::size_t time;
    friend bool operator==(const Slot&, const Slot&) = default;
  };
  std::vector<Slot> slots{{kEgoAgent, 0}};
  std::vector<double> values;

  static AnchorSpec ego_only() { return {}; }
  // Ego plus every neighbor at time 0.
  static AnchorSpec ego_and_neighbors(std::size_t agents);
};

struct PlannerConfig {
  std::size_t n_steps = 10;
  int order = 2;
  std::string solver = "dpmpp";  // "dpmpp" or "ddim" (first order)
  double beta0 = 0.1;
  double beta1 = 20.0;
  double temperature = 0.0;
  double t_start = kDefaultTStart;
  double t_end = kDefaultTEnd;
  std::uint64_t noise_seed = 0;
  Normalization normalization;
  AnchorSpec anchor;
  // Re-run the encoder before every core call instead of caching.
  bool monolithic_emulation = false;

  // Throws std::invalid_argument naming the field and its valid range.
  void validate() const;
  SolverKind kind() const;
  VpSchedule schedule() const { return VpSchedule(beta0, beta1); }

  std::string to_json() const;
  static PlannerConfig from_json(const std::string& text);
  static PlannerConfig load(const std::string& path);
};

// Returns cfg with one runtime-tunable key changed, validated. Keys:
// n_steps, order, solver, beta0, beta1, temperature, t_end.
PlannerConfig set_param(const PlannerConfig& cfg, std::string_view key, std::string_view value);

struct PlannerModels {
  std::shared_ptr<const EncoderModel> encoder;
  std::shared_ptr<const DenoiserModel> denoiser;
  std::shared_ptr<const TurnHead> head;
  Shape trajectory_shape = diffsolve::trajectory_shape();

  std::uint64_t weights_fingerprint() const;
};

// Seeded synthetic models: projection encoder, Gaussian denoiser, linear head.
PlannerModels gaussian_models(std::uint64_t seed, const Shape& trajectory = trajectory_shape(),
                              double variance = GaussianDenoiser::kDefaultVariance);
// Scene context with standard-normal field values.
SceneContext random_scene(std::uint64_t seed, const SceneLayout& layout = {});

struct CycleStats {
  std::uint64_t encoder_calls = 0;
  std::uint64_t core_calls = 0;
  double encode_ms = 0.0;
  double core_ms = 0.0;
  double solver_ms = 0.0;  // update arithmetic and anchoring
  double head_ms = 0.0;
  double total_ms = 0.0;

  std::string to_json() const;
};

struct PlanResult {
  Tensor trajectory;             // physical units
  Tensor normalized_trajectory;  // before denormalization
  int turn = 0;
  TurnLogits logits{};
  DenoisingTrace trace;  // N solver predictions plus the final one
  CycleStats stats;
};

// Aborted cycle. `stage` is one of config, encode, solve, denoise_to_zero,
// head; `step` is set for failures inside the loop.
class PlanError : public std::runtime_error {
 public:
  PlanError(std::string stage, std::optional<std::size_t> step, const std::string& what);
  const std::string& stage() const { return stage_; }
  std::optional<std::size_t> step() const { return step_; }

 private:
  std::string stage_;
  std::optional<std::size_t> step_;
};

// Runs one planning cycle: cached encode, logSNR grid, x = temperature * noise,
// N solver updates each followed by anchoring, one final core call at the last
// grid time, head, denormalization. Not thread-safe; use one per thread.
class Planner {
 public:
  explicit Planner(PlannerModels models, PlannerConfig config = {});

  PlanResult plan(const SceneContext& ctx);
  // Same cycle on a caller-supplied grid (e.g. a truncated one); the
  // config's n_steps and t_end are ignored.
  PlanResult plan_on_grid(const SceneContext& ctx, const TimestepGrid& grid);

  // Swaps in a validated config; models are untouched.
  void set_param(std::string_view key, std::string_view value);
  void set_config(PlannerConfig config);

  const PlannerConfig& config() const { return config_; }
  const PlannerModels& models() const { return models_; }
  const EncoderCache& cache() const { return *cache_; }

 private:
  PlannerModels models_;
  PlannerConfig config_;
  std::unique_ptr<EncoderCache> cache_;
  bool cache_enabled_;
};

// Overwrites the anchored slots of an A x T x C tensor.
void apply_anchor(const AnchorSpec& spec, std::span<const double> values, const Shape& shape, std::span<double> x);
// Anchor values for `spec` taken from the scene when spec.values is empty.
std::vector<double> resolve_anchor_values(const AnchorSpec& spec, const SceneContext& ctx);

}  // namespace diffsolve
