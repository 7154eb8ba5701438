#include <gtest/gtest.h>

#include <cmath>

#include "diffsolve/rng.hpp"
#include "diffsolve/schedule.hpp"

using namespace diffsolve;

namespace {

// Straight substitution, kept apart from the library's expm1/log1p forms.
double log_alpha_ref(double b0, double b1, double t) { return -0.25 * t * t * (b1 - b0) - 0.5 * t * b0; }

}  // namespace

TEST(Schedule, LogAlphaSubstitution) {
  const VpSchedule s(0.1, 20.0);
  EXPECT_EQ(s.log_alpha(0.0), 0.0);
  EXPECT_NEAR(s.log_alpha(1.0), -5.025, 1e-15);
  EXPECT_NEAR(s.log_alpha(0.5), -1.26875, 1e-15);
  Rng rng(1);
  for (int i = 0; i < 100; ++i) {
    const double t = rng.uniform();
    EXPECT_NEAR(s.log_alpha(t), log_alpha_ref(0.1, 20.0, t), 1e-14);
  }
}

TEST(Schedule, EndpointValues) {
  const VpSchedule s;
  const Marginal m = alpha_sigma_lambda(s, 1.0);
  EXPECT_NEAR(m.alpha, 6.56e-3, 2e-5);  // quoted to three figures
  EXPECT_NEAR(m.alpha, std::exp(-5.025), 1e-15);
  EXPECT_NEAR(m.sigma, 0.99998, 1e-5);
  EXPECT_NEAR(m.lambda, -5.025, 1e-4);
  EXPECT_GT(s.alpha(1e-9), 1.0 - 1e-8);
  EXPECT_EQ(s.alpha(0.0), 1.0);
  EXPECT_EQ(s.sigma(0.0), 0.0);
}

TEST(Schedule, VarianceIdentity) {
  const VpSchedule s;
  Rng rng(2);
  for (int i = 0; i < 10000; ++i) {
    const double t = rng.uniform();
    const double a = s.alpha(t), g = s.sigma(t);
    EXPECT_NEAR(a * a + g * g, 1.0, 1e-12) << "t=" << t;
  }
}

TEST(Schedule, Monotone) {
  const VpSchedule s;
  double pa = s.alpha(1e-6), ps = s.sigma(1e-6), pl = s.lambda(1e-6);
  for (int i = 1; i <= 1000; ++i) {
    const double t = 1e-6 + (1.0 - 1e-6) * i / 1000.0;
    EXPECT_LT(s.alpha(t), pa);
    EXPECT_GT(s.sigma(t), ps);
    EXPECT_LT(s.lambda(t), pl);
    pa = s.alpha(t);
    ps = s.sigma(t);
    pl = s.lambda(t);
  }
}

TEST(Schedule, InverseLambdaRoundTrip) {
  const VpSchedule s;
  for (double t : {0.5, 1.0, 1e-3}) EXPECT_NEAR(s.inverse_lambda(s.lambda(t)), t, 1e-9) << t;
  Rng rng(3);
  for (int i = 0; i < 10000; ++i) {
    const double t = std::pow(10.0, -3.0 * rng.uniform());
    EXPECT_NEAR(s.inverse_lambda(s.lambda(t)), t, 1e-9) << t;
  }
}

TEST(Schedule, InverseAgreesWithBisection) {
  const VpSchedule s(0.05, 12.0);
  Rng rng(4);
  for (int i = 0; i < 200; ++i) {
    const double lam = s.lambda(1.0) + rng.uniform() * (s.lambda(1e-4) - s.lambda(1.0));
    EXPECT_NEAR(s.inverse_lambda(lam), inverse_lambda_bisect(s, lam), 1e-10);
  }
  // Independent check of the bisection oracle itself.
  for (double t : {1e-3, 0.2, 0.9}) EXPECT_NEAR(inverse_lambda_bisect(s, s.lambda(t)), t, 1e-10);
}

TEST(Schedule, Errors) {
  const VpSchedule s;
  EXPECT_THROW(VpSchedule(0.2, 0.1), std::invalid_argument);
  EXPECT_THROW(VpSchedule(0.0, 1.0), std::invalid_argument);
  EXPECT_THROW(s.log_alpha(1.5), std::domain_error);
  EXPECT_THROW(s.log_alpha(-0.1), std::domain_error);
  EXPECT_THROW(s.lambda(0.0), std::domain_error);
  EXPECT_THROW(s.inverse_lambda(s.lambda(1.0) - 1.0), std::out_of_range);
  EXPECT_THROW(s.inverse_lambda(1e6), std::out_of_range);
}

TEST(Grid, SingleStepIsEndpoints) {
  const TimestepGrid g = make_grid(VpSchedule{}, 1);
  ASSERT_EQ(g.timesteps().size(), 2u);
  EXPECT_EQ(g.t(0), 1.0);
  EXPECT_EQ(g.t(1), 1e-3);
}

TEST(Grid, UniformInLogSnr) {
  const VpSchedule s;
  for (std::size_t n : {3u, 10u, 20u, 50u}) {
    const TimestepGrid g = make_grid(s, n);
    ASSERT_EQ(g.timesteps().size(), n + 1);
    const double expected = (s.lambda(1e-3) - s.lambda(1.0)) / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      EXPECT_GT(g.t(i), g.t(i + 1));
      EXPECT_NEAR(s.lambda(g.t(i + 1)) - s.lambda(g.t(i)), expected, 1e-9) << "n=" << n << " i=" << i;
    }
  }
}

TEST(Grid, DedicatedDiffersFromTruncated) {
  const VpSchedule s;
  const TimestepGrid small = make_grid(s, 3);
  const TimestepGrid cut = make_grid(s, 10).truncated(3);
  ASSERT_EQ(cut.timesteps().size(), 4u);
  EXPECT_EQ(cut.t(3), make_grid(s, 10).t(3));
  EXPECT_NE(small.timesteps(), cut.timesteps());
  EXPECT_EQ(small.t(0), cut.t(0));
}

TEST(Grid, Errors) {
  const VpSchedule s;
  EXPECT_THROW(make_grid(s, 0), std::invalid_argument);
  EXPECT_THROW(make_grid(s, 5, 0.5, 0.6), std::invalid_argument);
  EXPECT_THROW(make_grid(s, 5, 1.5, 0.1), std::invalid_argument);
  EXPECT_THROW(make_grid(s, 5, 1.0, 0.0), std::invalid_argument);
}
