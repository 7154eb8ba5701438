#include "diffsolve/solvers.hpp"

#include <cmath>

#include "diffsolve/simd.hpp"

namespace diffsolve {

std::string_view to_string(SolverKind kind) {
  switch (kind) {
    case SolverKind::Ddim:
      return "ddim";
    case SolverKind::DpmPP1:
      return "dpm1";
    case SolverKind::DpmPP2:
      return "dpm2";
  }
  return "?";
}

SolverKind parse_solver_kind(std::string_view name) {
  if (name == "ddim") return SolverKind::Ddim;
  if (name == "dpm1" || name == "dpmpp1") return SolverKind::DpmPP1;
  if (name == "dpm2" || name == "dpmpp2") return SolverKind::DpmPP2;
  throw std::invalid_argument("unknown solver '" + std::string(name) + "' (expected ddim, dpm1, dpm2)");
}

int solver_order(SolverKind kind) { return kind == SolverKind::DpmPP2 ? 2 : 1; }

StepCoefficients step_coefficients(const VpSchedule& sched, double t, double t_next) {
  if (t_next > t) {
    throw std::invalid_argument("solver step: t_next=" + std::to_string(t_next) + " > t=" + std::to_string(t));
  }
  const Marginal s = alpha_sigma_lambda(sched, t);
  if (t_next == t) return {0.0, 1.0, 0.0, s.alpha, s.alpha};
  const Marginal n = alpha_sigma_lambda(sched, t_next);
  const double h = n.lambda - s.lambda;
  return {h, n.sigma / s.sigma, -n.alpha * std::expm1(-h), s.alpha, n.alpha};
}

void first_order_update(const StepCoefficients& k, std::span<const double> x, std::span<const double> x0_hat,
                        std::span<double> out) {
  simd::kernels().axpby(k.sigma_ratio, x, k.data_weight, x0_hat, out);
}

void second_order_update(const StepCoefficients& k, double h_prev, std::span<const double> x,
                         std::span<const double> x0_hat, std::span<const double> x0_prev, std::span<double> scratch,
                         std::span<double> out) {
  if (!(h_prev > 0.0)) {
    throw std::domain_error("second-order step: previous log-SNR step h=" + std::to_string(h_prev) +
                            " is not positive");
  }
  const auto& kern = simd::kernels();
  // D1 = (x0 - x0_prev) / r with r = h_prev / h. The difference is formed
  // first so that equal predictions reduce to the first-order result exactly.
  kern.axpby(1.0, x0_hat, -1.0, x0_prev, scratch);
  const double inv_r = k.h / h_prev;
  kern.axpbypcz(k.sigma_ratio, x, k.data_weight, x0_hat, 0.5 * k.data_weight * inv_r, scratch, out);
}

void ddim_update(const StepCoefficients& k, std::span<const double> x, std::span<const double> x0_hat,
                 std::span<double> out) {
  if (k.h == 0.0) {
    std::copy(x.begin(), x.end(), out.begin());
    return;
  }
  simd::kernels().ddim_combine(k.alpha_t, x0_hat, k.sigma_ratio, x, k.alpha_s, out);
}

namespace {

void check_step_inputs(const SolverState& state, const Tensor& x0_hat) {
  require_same_shape(state.x, x0_hat, "solver step");
}

}  // namespace

SolverState step_first_order(const VpSchedule& sched, const SolverState& state, const Tensor& x0_hat,
                             double t_next) {
  check_step_inputs(state, x0_hat);
  const StepCoefficients k = step_coefficients(sched, state.t, t_next);
  SolverState next{Tensor(state.x.shape()), t_next, SolverHistory{x0_hat, k.h}};
  first_order_update(k, state.x.values(), x0_hat.values(), next.x.values());
  return next;
}

SolverState step_second_order(const VpSchedule& sched, const SolverState& state, const Tensor& x0_hat,
                              double t_next) {
  check_step_inputs(state, x0_hat);
  if (!state.history) {
    throw std::logic_error("second-order step needs a previous prediction; take a first-order step first");
  }
  require_same_shape(state.history->x0_hat, x0_hat, "second-order history");
  const StepCoefficients k = step_coefficients(sched, state.t, t_next);
  SolverState next{Tensor(state.x.shape()), t_next, SolverHistory{x0_hat, k.h}};
  Tensor scratch(state.x.shape());
  second_order_update(k, state.history->h, state.x.values(), x0_hat.values(), state.history->x0_hat.values(),
                      scratch.values(), next.x.values());
  return next;
}

SolverState step_ddim(const VpSchedule& sched, const SolverState& state, const Tensor& x0_hat, double t_next) {
  check_step_inputs(state, x0_hat);
  const StepCoefficients k = step_coefficients(sched, state.t, t_next);
  SolverState next{Tensor(state.x.shape()), t_next, SolverHistory{x0_hat, k.h}};
  ddim_update(k, state.x.values(), x0_hat.values(), next.x.values());
  return next;
}

SolverStepError::SolverStepError(std::size_t step, const std::string& what)
    : std::runtime_error("step " + std::to_string(step) + ": " + what), step_(step) {}

SolveResult run_solver(SolverKind kind, const VpSchedule& sched, const TimestepGrid& grid,
                       const DenoiserModel& denoiser, const ContextEmbedding& context, const Tensor& x_init,
                       const SolverHooks& hooks) {
  const std::size_t n = grid.n_steps();
  const Shape& shape = x_init.shape();

  // Everything the loop touches is allocated up front.
  Tensor x = x_init;
  Tensor x_next(shape);
  Tensor x0(shape);
  Tensor scratch(shape);
  SolveResult result;
  result.trace.entries.reserve(n);
  for (std::size_t i = 0; i < n; ++i) result.trace.entries.push_back({i, grid.t(i), Tensor(shape)});

  double h_prev = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = grid.t(i);
    const double t_next = grid.t(i + 1);
    try {
      denoiser.predict(x, context, t, x0);
    } catch (const std::exception& e) {
      throw SolverStepError(i, DenoiserError(t, e.what()).what());
    }

    const StepCoefficients k = step_coefficients(sched, t, t_next);
    const bool first_order = (i == 0 || kind == SolverKind::DpmPP1);
    if (kind == SolverKind::Ddim) {
      ddim_update(k, x.values(), x0.values(), x_next.values());
    } else if (first_order) {
      first_order_update(k, x.values(), x0.values(), x_next.values());
    } else {
      const Tensor& x0_prev = result.trace.entries[i - 1].x0_hat;
      second_order_update(k, h_prev, x.values(), x0.values(), x0_prev.values(), scratch.values(), x_next.values());
    }
    h_prev = k.h;

    TraceEntry& entry = result.trace.entries[i];
    std::copy(x0.values().begin(), x0.values().end(), entry.x0_hat.values().begin());
    std::swap(x, x_next);
    try {
      if (hooks.after_update) hooks.after_update(i, t_next, x.values());
      if (hooks.on_prediction) hooks.on_prediction(entry);
    } catch (const SolverStepError&) {
      throw;
    } catch (const std::exception& e) {
      throw SolverStepError(i, e.what());
    }
  }
  result.x_final = std::move(x);
  return result;
}

}  // namespace diffsolve
