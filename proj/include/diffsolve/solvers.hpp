#pragma once

#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "diffsolve/denoiser.hpp"
#include "diffsolve/schedule.hpp"
#include "diffsolve/tensor.hpp"

namespace diffsolve {

enum class SolverKind { Ddim, DpmPP1, DpmPP2 };

std::string_view to_string(SolverKind kind);
// Accepts "ddim", "dpm1", "dpm2" (and "dpmpp1"/"dpmpp2").
SolverKind parse_solver_kind(std::string_view name);
int solver_order(SolverKind kind);

// Previous x0 prediction and the log-SNR step that followed it. Held
// together so that one cannot exist without the other.
struct SolverHistory {
  Tensor x0_hat;
  double h;
};

struct SolverState {
  Tensor x;  // normalized units
  double t;
  std::optional<SolverHistory> history;
};

// Per-step scalars shared by all three update rules.
struct StepCoefficients {
  double h;            // lambda(t_next) - lambda(t)
  double sigma_ratio;  // sigma(t_next) / sigma(t)
  double data_weight;  // alpha(t_next) * (1 - exp(-h))
  double alpha_s;
  double alpha_t;
};

// Throws std::invalid_argument if t_next > t (time must not increase).
StepCoefficients step_coefficients(const VpSchedule& sched, double t, double t_next);

// In-place forms used by the sampling loop; no allocation. `out` may not
// alias the inputs. `scratch` must be sized like x.
void first_order_update(const StepCoefficients& k, std::span<const double> x, std::span<const double> x0_hat,
                        std::span<double> out);
void second_order_update(const StepCoefficients& k, double h_prev, std::span<const double> x,
                         std::span<const double> x0_hat, std::span<const double> x0_prev, std::span<double> scratch,
                         std::span<double> out);
void ddim_update(const StepCoefficients& k, std::span<const double> x, std::span<const double> x0_hat,
                 std::span<double> out);

// x_t = (sigma_t / sigma_s) x_s + alpha_t (1 - e^-h) x0_hat.
SolverState step_first_order(const VpSchedule& sched, const SolverState& state, const Tensor& x0_hat, double t_next);
// Adds (1/2) alpha_t (1 - e^-h) D1, D1 = (x0_hat - x0_prev) / r, r = h_prev / h.
// Throws std::logic_error when the state carries no history.
SolverState step_second_order(const VpSchedule& sched, const SolverState& state, const Tensor& x0_hat,
                              double t_next);
// Deterministic DDIM (eta = 0): x_t = alpha_t x0 + (sigma_t / sigma_s)(x_s - alpha_s x0).
SolverState step_ddim(const VpSchedule& sched, const SolverState& state, const Tensor& x0_hat, double t_next);

struct TraceEntry {
  std::size_t step;
  double t;  // time at which x0_hat was predicted
  Tensor x0_hat;
};

struct DenoisingTrace {
  std::vector<TraceEntry> entries;
};

struct SolverHooks {
  // Runs after each update with the new state; may overwrite values (anchoring).
  std::function<void(std::size_t step, double t_next, std::span<double> x)> after_update;
  // Sees each prediction as it is recorded into the trace.
  std::function<void(const TraceEntry&)> on_prediction;
};

// A denoiser or hook failure inside the loop, tagged with the step index.
class SolverStepError : public std::runtime_error {
 public:
  SolverStepError(std::size_t step, const std::string& what);
  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

struct SolveResult {
  Tensor x_final;
  DenoisingTrace trace;
};

// N updates over the grid with exactly N denoiser calls. For DpmPP2 the first
// update is first order. No final denoise-to-zero; the caller does that.
SolveResult run_solver(SolverKind kind, const VpSchedule& sched, const TimestepGrid& grid,
                       const DenoiserModel& denoiser, const ContextEmbedding& context, const Tensor& x_init,
                       const SolverHooks& hooks = {});

}  // namespace diffsolve
