#include <gtest/gtest.h>

#include <cmath>

#include "diffsolve/rng.hpp"
#include "diffsolve/solvers.hpp"
#include "test_util.hpp"

using namespace diffsolve;
using testutil::ProbeDenoiser;

namespace {

Tensor random_tensor(Rng& rng, const Shape& shape, double scale = 1.0) {
  Tensor t(shape);
  for (double& v : t.values()) v = scale * rng.normal();
  return t;
}

double rel_err(const Tensor& a, const Tensor& b) {
  return max_abs_diff(a, b) / std::max(max_abs(b), 1e-300);
}

std::shared_ptr<GaussianDenoiser> scalar_gaussian(double mu, double v) {
  return std::make_shared<GaussianDenoiser>(Tensor({1}, mu), v);
}

double solve_scalar(SolverKind kind, std::size_t n, double mu, double v, double x_init = 0.0) {
  const VpSchedule s;
  const auto d = scalar_gaussian(mu, v);
  return run_solver(kind, s, make_grid(s, n), *d, {}, Tensor({1}, x_init)).x_final[0];
}

}  // namespace

TEST(Step, ZeroLengthStepIsIdentity) {
  const VpSchedule s;
  Rng rng(1);
  const SolverState st{random_tensor(rng, {3, 5, 4}), 0.4, std::nullopt};
  const Tensor x0 = random_tensor(rng, {3, 5, 4});
  EXPECT_EQ(step_first_order(s, st, x0, 0.4).x, st.x);
  EXPECT_EQ(step_ddim(s, st, x0, 0.4).x, st.x);
}

TEST(Step, ZeroPredictionScalesBySigmaRatio) {
  const VpSchedule s;
  Rng rng(2);
  const SolverState st{random_tensor(rng, {10}), 0.7, std::nullopt};
  const SolverState out = step_first_order(s, st, Tensor({10}), 0.3);
  const double r = s.sigma(0.3) / s.sigma(0.7);
  for (std::size_t i = 0; i < 10; ++i) EXPECT_NEAR(out.x[i], r * st.x[i], 1e-15 * std::abs(st.x[i]) + 1e-300);
  EXPECT_EQ(out.t, 0.3);
}

TEST(Step, TimeMustNotIncrease) {
  const VpSchedule s;
  EXPECT_THROW(step_coefficients(s, 0.3, 0.5), std::invalid_argument);
  const SolverState st{Tensor({2}), 0.3, std::nullopt};
  EXPECT_THROW(step_first_order(s, st, Tensor({2}), 0.5), std::invalid_argument);
}

TEST(Step, ShapeMismatchRejected) {
  const SolverState st{Tensor({2}), 0.5, std::nullopt};
  EXPECT_THROW(step_first_order(VpSchedule{}, st, Tensor({3}), 0.3), std::invalid_argument);
}

TEST(Step, DdimEqualsFirstOrderOnRandomTriples) {
  Rng rng(3);
  for (int i = 0; i < 1000; ++i) {
    const VpSchedule s(0.05 + 0.2 * rng.uniform(), 5.0 + 20.0 * rng.uniform());
    const double t = 1e-3 + (1.0 - 1e-3) * rng.uniform();
    const double t_next = 1e-3 + (t - 1e-3) * rng.uniform();
    const SolverState st{random_tensor(rng, {16}, 3.0), t, std::nullopt};
    const Tensor x0 = random_tensor(rng, {16}, 3.0);
    EXPECT_LE(rel_err(step_ddim(s, st, x0, t_next).x, step_first_order(s, st, x0, t_next).x), 1e-12);
  }
}

TEST(Step, DdimPerfectGuess) {
  const VpSchedule s;
  Rng rng(4);
  const SolverState st{random_tensor(rng, {8}), 0.6, std::nullopt};
  Tensor x0(st.x.shape());
  for (std::size_t i = 0; i < 8; ++i) x0[i] = st.x[i] / s.alpha(0.6);
  const Tensor out = step_ddim(s, st, x0, 0.2).x;
  for (std::size_t i = 0; i < 8; ++i) EXPECT_NEAR(out[i], s.alpha(0.2) * x0[i], 1e-12 * std::abs(out[i]));
}

TEST(Step, SecondOrderWithoutChangeIsFirstOrder) {
  const VpSchedule s;
  Rng rng(5);
  const Tensor x0 = random_tensor(rng, {40});
  const SolverState st{random_tensor(rng, {40}), 0.5, SolverHistory{x0, 0.8}};
  EXPECT_EQ(step_second_order(s, st, x0, 0.25).x, step_first_order(s, st, x0, 0.25).x);
}

TEST(Step, SecondOrderNeedsHistory) {
  const SolverState st{Tensor({2}), 0.5, std::nullopt};
  EXPECT_THROW(step_second_order(VpSchedule{}, st, Tensor({2}), 0.3), std::logic_error);
}

TEST(Step, SecondOrderMatchesFormulaOnNonUniformGrid) {
  const VpSchedule s;
  Rng rng(6);
  const double t = 0.4, t_next = 0.1, h_prev = 0.37;
  const Tensor x0 = random_tensor(rng, {6}), x0p = random_tensor(rng, {6});
  const SolverState st{random_tensor(rng, {6}), t, SolverHistory{x0p, h_prev}};
  const Tensor out = step_second_order(s, st, x0, t_next).x;
  const double h = s.lambda(t_next) - s.lambda(t);
  const double r = h_prev / h;
  for (std::size_t i = 0; i < 6; ++i) {
    const double d1 = (x0[i] - x0p[i]) / r;
    const double ref = s.sigma(t_next) / s.sigma(t) * st.x[i] + s.alpha(t_next) * (1 - std::exp(-h)) * x0[i] +
                       0.5 * s.alpha(t_next) * (1 - std::exp(-h)) * d1;
    EXPECT_NEAR(out[i], ref, 1e-12 * (1 + std::abs(ref)));
  }
  // The step size ratio matters off a uniform grid.
  const SolverState st2{st.x, t, SolverHistory{x0p, 2 * h_prev}};
  EXPECT_NE(step_second_order(s, st2, x0, t_next).x, out);
}

TEST(Step, StepsAreLinear) {
  const VpSchedule s;
  Rng rng(7);
  const Tensor x = random_tensor(rng, {12}), x0 = random_tensor(rng, {12}), x0p = random_tensor(rng, {12});
  auto twice = [](const Tensor& a) {
    Tensor b = a;
    for (double& v : b.values()) v *= 2.0;
    return b;
  };
  const SolverState st{x, 0.6, SolverHistory{x0p, 0.5}};
  const SolverState st2{twice(x), 0.6, SolverHistory{twice(x0p), 0.5}};
  EXPECT_EQ(step_first_order(s, st2, twice(x0), 0.3).x, twice(step_first_order(s, st, x0, 0.3).x));
  EXPECT_EQ(step_second_order(s, st2, twice(x0), 0.3).x, twice(step_second_order(s, st, x0, 0.3).x));
  EXPECT_EQ(step_ddim(s, st2, twice(x0), 0.3).x, twice(step_ddim(s, st, x0, 0.3).x));
}

TEST(Step, UniformGridGivesUnitRatio) {
  const VpSchedule s;
  const TimestepGrid g = make_grid(s, 10);
  for (std::size_t i = 1; i < 10; ++i) {
    const double h_prev = step_coefficients(s, g.t(i - 1), g.t(i)).h;
    const double h = step_coefficients(s, g.t(i), g.t(i + 1)).h;
    EXPECT_NEAR(h_prev / h, 1.0, 1e-9);
  }
}

TEST(GaussianOracle, ExactFlowAgreesWithDenseRk4) {
  const VpSchedule s;
  for (auto [mu, v, x] : {std::tuple{0.7, 0.25, 0.0}, {-1.3, 0.8, 0.4}, {2.0, 0.05, -1.0}}) {
    const GaussianDenoiser d(Tensor({1}, mu), v);
    const double exact = d.exact_flow(Tensor({1}, x), 1.0, 1e-3)[0];
    const double rk4 = testutil::rk4_flow(x, s.lambda(1.0), s.lambda(1e-3), mu, v);
    EXPECT_NEAR(exact, rk4, 1e-9);
  }
}

TEST(RunSolver, DenseFirstOrderConvergesToOracle) {
  const VpSchedule s;
  const double mu = 0.7, v = 0.25;
  const GaussianDenoiser d(Tensor({1}, mu), v);
  const double exact = d.exact_flow(Tensor({1}, 0.0), 1.0, 1e-3)[0];
  EXPECT_NEAR(solve_scalar(SolverKind::DpmPP1, 10000, mu, v), exact, 1e-4);
}

TEST(RunSolver, SecondOrderBeatsFirstOrderAtFiveSteps) {
  const double mu = 0.7, v = 0.25;
  const GaussianDenoiser d(Tensor({1}, mu), v);
  const double exact = d.exact_flow(Tensor({1}, 0.0), 1.0, 1e-3)[0];
  const double e1 = std::abs(solve_scalar(SolverKind::DpmPP1, 5, mu, v) - exact);
  const double e2 = std::abs(solve_scalar(SolverKind::DpmPP2, 5, mu, v) - exact);
  EXPECT_LT(e2, e1);
}

TEST(RunSolver, ConvergenceOrdering) {
  const Shape shape{4, 9, 4};
  const auto d = std::make_shared<GaussianDenoiser>(GaussianDenoiser::from_seed(11, shape));
  const VpSchedule s;
  const Tensor x_init(shape);
  const Tensor exact = d->exact_flow(x_init, 1.0, 1e-3);
  double prev1 = INFINITY;
  for (std::size_t n : {3u, 5u, 7u, 10u, 15u, 20u}) {
    const TimestepGrid g = make_grid(s, n);
    const double e1 = max_abs_diff(run_solver(SolverKind::DpmPP1, s, g, *d, {}, x_init).x_final, exact);
    const double e2 = max_abs_diff(run_solver(SolverKind::DpmPP2, s, g, *d, {}, x_init).x_final, exact);
    EXPECT_LE(e2, e1) << "N=" << n;
    EXPECT_LT(e1, prev1) << "N=" << n;
    prev1 = e1;
  }
}

TEST(RunSolver, SingleStepIsOneFirstOrderUpdate) {
  const VpSchedule s;
  const Shape shape{2, 3, 4};
  auto inner = std::make_shared<GaussianDenoiser>(GaussianDenoiser::from_seed(1, shape));
  Rng rng(8);
  const Tensor x = random_tensor(rng, shape);
  const TimestepGrid g = make_grid(s, 1);
  ProbeDenoiser p1(inner), p2(inner);
  const SolveResult r1 = run_solver(SolverKind::DpmPP1, s, g, p1, {}, x);
  const SolveResult r2 = run_solver(SolverKind::DpmPP2, s, g, p2, {}, x);
  EXPECT_EQ(p1.calls(), 1u);
  EXPECT_EQ(p2.calls(), 1u);
  EXPECT_EQ(r1.x_final, r2.x_final);
}

TEST(RunSolver, TraceRecordsEveryPrediction) {
  const VpSchedule s;
  const Shape shape{2, 3, 4};
  auto inner = std::make_shared<GaussianDenoiser>(GaussianDenoiser::from_seed(2, shape));
  std::vector<Tensor> seen;
  ProbeDenoiser p(inner, [&](std::size_t, const Tensor&, double, Tensor& out) { seen.push_back(out); });
  const TimestepGrid g = make_grid(s, 7);
  const SolveResult r = run_solver(SolverKind::DpmPP2, s, g, p, {}, Tensor(shape));
  ASSERT_EQ(r.trace.entries.size(), 7u);
  EXPECT_EQ(p.calls(), 7u);
  for (std::size_t i = 0; i < 7; ++i) {
    EXPECT_EQ(r.trace.entries[i].step, i);
    EXPECT_EQ(r.trace.entries[i].t, g.t(i));
    EXPECT_EQ(r.trace.entries[i].x0_hat, seen[i]);
  }
}

TEST(RunSolver, DdimMatchesFirstOrderOverFullRuns) {
  const VpSchedule s;
  const Shape shape{3, 11, 4};
  const auto d = std::make_shared<GaussianDenoiser>(GaussianDenoiser::from_seed(5, shape));
  Rng rng(9);
  const Tensor x = random_tensor(rng, shape);
  for (std::size_t n : {1u, 3u, 5u, 7u, 10u, 15u, 20u, 50u}) {
    const TimestepGrid g = make_grid(s, n);
    EXPECT_LE(rel_err(run_solver(SolverKind::Ddim, s, g, *d, {}, x).x_final,
                      run_solver(SolverKind::DpmPP1, s, g, *d, {}, x).x_final),
              1e-12);
  }
}

TEST(RunSolver, Deterministic) {
  const VpSchedule s;
  const Shape shape{3, 5, 4};
  const auto d = std::make_shared<GaussianDenoiser>(GaussianDenoiser::from_seed(6, shape));
  const TimestepGrid g = make_grid(s, 10);
  EXPECT_EQ(run_solver(SolverKind::DpmPP2, s, g, *d, {}, Tensor(shape)).x_final,
            run_solver(SolverKind::DpmPP2, s, g, *d, {}, Tensor(shape)).x_final);
}

TEST(RunSolver, FailuresCarryStepIndex) {
  const VpSchedule s;
  const Shape shape{1, 2, 4};
  auto inner = std::make_shared<GaussianDenoiser>(GaussianDenoiser::from_seed(3, shape));
  ProbeDenoiser p(inner, [](std::size_t call, const Tensor&, double, Tensor&) {
    if (call == 3) throw std::runtime_error("backend lost");
  });
  try {
    run_solver(SolverKind::DpmPP2, s, make_grid(s, 6), p, {}, Tensor(shape));
    FAIL() << "expected SolverStepError";
  } catch (const SolverStepError& e) {
    EXPECT_EQ(e.step(), 3u);
    EXPECT_NE(std::string(e.what()).find("backend lost"), std::string::npos);
  }

  SolverHooks hooks;
  hooks.after_update = [](std::size_t step, double, std::span<double>) {
    if (step == 2) throw std::runtime_error("hook");
  };
  try {
    run_solver(SolverKind::DpmPP1, s, make_grid(s, 6), *inner, {}, Tensor(shape), hooks);
    FAIL() << "expected SolverStepError";
  } catch (const SolverStepError& e) {
    EXPECT_EQ(e.step(), 2u);
  }
}

TEST(SolverKind, Names) {
  EXPECT_EQ(parse_solver_kind("ddim"), SolverKind::Ddim);
  EXPECT_EQ(parse_solver_kind("dpm1"), SolverKind::DpmPP1);
  EXPECT_EQ(parse_solver_kind("dpmpp2"), SolverKind::DpmPP2);
  EXPECT_THROW(parse_solver_kind("euler"), std::invalid_argument);
  EXPECT_EQ(solver_order(SolverKind::Ddim), 1);
  EXPECT_EQ(solver_order(SolverKind::DpmPP2), 2);
  EXPECT_EQ(to_string(SolverKind::DpmPP1), "dpm1");
}
