#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "diffsolve/pipeline.hpp"

namespace diffsolve {

// Per-call costs in milliseconds.
struct LatencyModel {
  double t_enc = 0.0;
  double t_dit = 0.0;
  double t_sol = 0.0;

  void validate() const;  // all finite and >= 0
};

// Desktop measurements of the reference planner.
inline constexpr LatencyModel kReferenceLatency{27.5, 2.3, 0.01};
inline constexpr double kPlanningBudgetMs = 100.0;

// Encoder re-run before every one of the N + 1 core calls:
// (N + 1) t_enc + (N + 1) t_dit + N t_sol.
double latency_mono(const LatencyModel& m, std::size_t n);
// Encoder run once: t_enc + (N + 1) t_dit + N t_sol.
double latency_mod(const LatencyModel& m, std::size_t n);

struct DisplacementErrors {
  double fde_m = 0.0;
  double ade_m = 0.0;
};

// On one agent's x, y channels of A x T x C physical trajectories. FDE is
// the distance at the last waypoint; ADE averages waypoints 1..T-1 (index 0
// is the anchored current state).
DisplacementErrors displacement_errors(const Tensor& pred, const Tensor& ref, std::size_t agent = kEgoAgent);

// Synthetic benchmark scenes: shared encoder and head, one seeded Gaussian
// denoiser and random context per scene.
struct BenchScene {
  std::uint64_t seed = 0;
  SceneContext context;
  PlannerModels models;
};
std::vector<BenchScene> make_scenes(std::uint64_t seed, std::size_t count, const Shape& trajectory = trajectory_shape(),
                                    const SceneLayout& layout = {});

struct SweepConfig {
  std::vector<SolverKind> kinds{SolverKind::Ddim, SolverKind::DpmPP1, SolverKind::DpmPP2};
  std::vector<std::size_t> step_counts{3, 5, 7, 10, 15, 20};
  SolverKind reference_kind = SolverKind::DpmPP2;
  std::size_t reference_steps = 10;
  PlannerConfig base;  // everything but solver and step count
  LatencyModel latency = kReferenceLatency;
  bool measure_latency = true;
  std::size_t warmup = 1;
};

struct SweepRow {
  SolverKind kind = SolverKind::DpmPP2;
  std::size_t n_steps = 0;
  bool reference = false;
  std::size_t scenes = 0;
  double fde_m = 0.0;
  double fde_std_m = 0.0;  // across scenes
  double ade_m = 0.0;
  double ade_std_m = 0.0;
  double latency_mono_model_ms = 0.0;
  double latency_mod_model_ms = 0.0;
  double latency_measured_ms = 0.0;
  double latency_measured_std_ms = 0.0;
  std::uint64_t encoder_calls = 0;  // per plan()
  std::uint64_t core_calls = 0;
  bool failed = false;
  std::string error;

  int order() const { return solver_order(kind); }
};

struct SweepResult {
  std::vector<SweepRow> rows;  // sorted by (kind, order, N)

  const SweepRow* find(SolverKind kind, std::size_t n_steps) const;
  // Deterministic section only; measured timings go to timing_csv().
  std::string to_csv() const;
  std::string timing_csv() const;
};

// Errors are per scene against the reference configuration, then averaged.
// A row whose plan() throws is marked failed; the sweep continues.
SweepResult run_sweep(const std::vector<BenchScene>& scenes, const SweepConfig& config = {});

struct TruncationRow {
  std::size_t n_full = 0;
  std::size_t n_small = 0;
  DisplacementErrors dedicated;  // mean over scenes, against the n_full run
  DisplacementErrors truncated;
  double dedicated_rel_err = 0.0;  // ||x0 - x0_ref|| / ||x0_ref||, mean over scenes
  double truncated_rel_err = 0.0;
  double fde_ratio() const;  // truncated / dedicated (1 when both are zero)
};

// (a) a dedicated n_small grid against (b) the first n_small updates of the
// n_full grid followed by the final core call at its time.
TruncationRow truncation_study(const std::vector<BenchScene>& scenes, std::size_t n_full = 10, std::size_t n_small = 3,
                               const PlannerConfig& base = {});

struct ParetoPoint {
  std::string label;
  double latency_ms = 0.0;
  double error = 0.0;
};

struct ParetoVerdict {
  ParetoPoint point;
  bool on_frontier = false;
  bool within_budget = false;  // latency strictly under budget
};

// Verdicts sorted by (latency, error, label) whatever the input order.
std::vector<ParetoVerdict> pareto(const std::vector<ParetoPoint>& points, double budget_ms = kPlanningBudgetMs);

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double max_abs_residual = 0.0;
};
LinearFit fit_line(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace diffsolve
