#include <gtest/gtest.h>

#include <cmath>

#include "diffsolve/denoiser.hpp"
#include "diffsolve/rng.hpp"
#include "test_util.hpp"

using namespace diffsolve;

namespace {

SceneContext seeded_scene(std::uint64_t seed, const SceneLayout& layout = {}) {
  SceneContext ctx(layout);
  Rng rng(seed);
  for (std::size_t f = 0; f < SceneContext::kFieldCount; ++f)
    for (double& v : ctx.mutable_values(f)) v = rng.normal();
  return ctx;
}

}  // namespace

TEST(GaussianDenoiser, MatchesPosteriorFormula) {
  const VpSchedule s;
  const GaussianDenoiser d(Tensor({3}, std::vector<double>{0.5, -1.0, 2.0}), 0.3);
  for (double t : {1e-3, 0.05, 0.3, 0.7, 1.0}) {
    const Tensor x({3}, std::vector<double>{0.2, -0.4, 1.5});
    const Tensor out = d.predict_x0(x, {}, t);
    for (std::size_t i = 0; i < 3; ++i)
      EXPECT_NEAR(out[i], testutil::gaussian_x0(x[i], s.lambda(t), d.mean()[i], 0.3), 1e-12);
  }
}

TEST(GaussianDenoiser, AgreesWithImportanceSampling) {
  const VpSchedule s;
  const double mu = 0.4, v = 0.5;
  const GaussianDenoiser d(Tensor({1}, mu), v);
  Rng rng(17);
  const int kSamples = 100000;
  for (int draw = 0; draw < 20; ++draw) {
    const double t = rng.uniform(0.15, 1.0);
    const double a = s.alpha(t), sg = s.sigma(t);
    const double x_t = a * (mu + std::sqrt(v) * rng.normal()) + sg * rng.normal();
    // Self-normalized importance sampling from the prior.
    std::vector<double> xs(kSamples), lw(kSamples);
    double lmax = -INFINITY;
    for (int k = 0; k < kSamples; ++k) {
      xs[k] = mu + std::sqrt(v) * rng.normal();
      const double r = (x_t - a * xs[k]) / sg;
      lw[k] = -0.5 * r * r;
      lmax = std::max(lmax, lw[k]);
    }
    double sw = 0, swx = 0, sw2 = 0;
    for (int k = 0; k < kSamples; ++k) {
      const double w = std::exp(lw[k] - lmax);
      sw += w;
      swx += w * xs[k];
      sw2 += w * w;
    }
    const double est = swx / sw;
    double var = 0;
    for (int k = 0; k < kSamples; ++k) {
      const double w = std::exp(lw[k] - lmax) / sw;
      var += w * w * (xs[k] - est) * (xs[k] - est);
    }
    const double se = std::sqrt(var);
    const double exact = d.predict_x0(Tensor({1}, x_t), {}, t)[0];
    EXPECT_NEAR(exact, est, 3.0 * se + 1e-12) << "t=" << t << " ess=" << sw * sw / sw2;
  }
}

TEST(GaussianDenoiser, LimitingCases) {
  // v -> 0: the prediction collapses to the mean.
  const GaussianDenoiser tight(Tensor({1}, 1.25), 1e-12);
  EXPECT_NEAR(tight.predict_x0(Tensor({1}, -3.0), {}, 0.5)[0], 1.25, 1e-9);
  // x_t = alpha mean: the prediction is exactly the mean.
  const VpSchedule s;
  const GaussianDenoiser d(Tensor({1}, -0.8), 0.4);
  for (double t : {0.01, 0.4, 1.0})
    EXPECT_NEAR(d.predict_x0(Tensor({1}, s.alpha(t) * -0.8), {}, t)[0], -0.8, 1e-14);
}

TEST(GaussianDenoiser, ExactFlowIsConsistent) {
  const GaussianDenoiser d = GaussianDenoiser::from_seed(3, {2, 3, 4});
  Tensor x({2, 3, 4});
  Rng rng(4);
  for (double& v : x.values()) v = rng.normal();
  const Tensor mid = d.exact_flow(x, 1.0, 0.3);
  const Tensor direct = d.exact_flow(x, 1.0, 0.01);
  EXPECT_LT(max_abs_diff(d.exact_flow(mid, 0.3, 0.01), direct), 1e-12);
  EXPECT_LT(max_abs_diff(d.exact_flow(x, 0.5, 0.5), x), 1e-15);
}

TEST(GaussianDenoiser, RejectsTimeOutsideUnitInterval) {
  const GaussianDenoiser d(Tensor({1}), 0.25);
  EXPECT_THROW(d.predict_x0(Tensor({1}), {}, 0.0), DenoiserError);
  EXPECT_THROW(d.predict_x0(Tensor({1}), {}, 1.5), DenoiserError);
  try {
    d.predict_x0(Tensor({1}), {}, -0.2);
  } catch (const DenoiserError& e) {
    EXPECT_EQ(e.t(), -0.2);
  }
  EXPECT_THROW(GaussianDenoiser(Tensor({1}), 0.0), std::invalid_argument);
}

TEST(GaussianFixture, JsonRoundTrip) {
  GaussianFixture f;
  f.seed = 42;
  f.shape = {2, 5, 4};
  f.variance = 0.3;
  f.mean_scale = 2.0;
  f.schedule = VpSchedule(0.2, 15.0);
  const GaussianFixture g = GaussianFixture::from_json(f.to_json());
  EXPECT_EQ(g.seed, f.seed);
  EXPECT_EQ(g.shape, f.shape);
  EXPECT_EQ(g.schedule, f.schedule);
  EXPECT_EQ(g.build().mean(), f.build().mean());
  EXPECT_EQ(g.build().weights_fingerprint(), f.build().weights_fingerprint());
  EXPECT_THROW(GaussianFixture::from_json("{\"shape\": [2], \"mean\": [1, 2, 3]}"), std::exception);
}

TEST(ProjectionEncoder, DeterministicWithExpectedShape) {
  const ProjectionEncoder a(7), b(7), c(8);
  const SceneContext ctx = seeded_scene(1);
  const ContextEmbedding ea = a.encode(ctx);
  EXPECT_EQ(ea.values.shape(), (Shape{kEmbeddingTokens, kEmbeddingWidth}));
  EXPECT_EQ(ea, b.encode(ctx));
  EXPECT_NE(ea, c.encode(ctx));
  EXPECT_EQ(a.weights_fingerprint(), b.weights_fingerprint());
  EXPECT_NE(a.weights_fingerprint(), c.weights_fingerprint());
  EXPECT_NE(ea, a.encode(seeded_scene(2)));
}

TEST(ProjectionEncoder, ZeroContextIsFinite) {
  const ContextEmbedding e = ProjectionEncoder(1).encode(SceneContext{});
  EXPECT_TRUE(all_finite(e.values));
}

TEST(CountingEncoder, CountsCalls) {
  auto inner = std::make_shared<ProjectionEncoder>(3, 4, 8);
  CountingEncoder enc(inner);
  const SceneContext ctx = seeded_scene(5);
  EXPECT_EQ(enc.encode(ctx), inner->encode(ctx));
  enc.encode(ctx);
  EXPECT_EQ(enc.calls(), 2u);
  EXPECT_EQ(enc.weights_fingerprint(), inner->weights_fingerprint());
}

TEST(SceneContext, CanonicalBytesTrackContent) {
  const SceneContext a = seeded_scene(9), b = seeded_scene(9);
  EXPECT_EQ(a.canonical_bytes(), b.canonical_bytes());
  EXPECT_EQ(a.content_hash(), b.content_hash());
  SceneContext c = a;
  c.mutable_values(5)[3] += 1e-12;
  EXPECT_NE(a.canonical_bytes(), c.canonical_bytes());
  EXPECT_NE(a.content_hash(), c.content_hash());
  EXPECT_EQ(a.flatten().size(), a.total_size());
  EXPECT_EQ(SceneContext(SceneLayout::compact()).total_size(), 32u);
  // -0.0 and 0.0 differ bitwise and so key differently.
  SceneContext z(SceneLayout::compact()), nz(SceneLayout::compact());
  nz.mutable_values(0)[0] = -0.0;
  EXPECT_NE(z.canonical_bytes(), nz.canonical_bytes());
}

TEST(LinearHead, TieGoesToLowestClass) {
  const std::size_t horizon = 3, width = 2;
  const LinearHead head(Tensor({4, 2 * horizon + width}), Tensor({4}), {0, 1, 2});
  const ContextEmbedding c{Tensor({5, width}, 1.0)};
  EXPECT_EQ(turn_indicator(head, Tensor({1, horizon, 4}, 1.0), c), 0);
}

TEST(LinearHead, BiasSelectsClass) {
  const std::size_t horizon = 3, width = 2;
  const LinearHead head(Tensor({4, 2 * horizon + width}), Tensor({4}, std::vector<double>{0, 0, 1, 0}), {0, 1, 2});
  const ContextEmbedding c{Tensor({5, width})};
  EXPECT_EQ(turn_indicator(head, Tensor({2, horizon, 4}), c), 2);
}

TEST(LinearHead, UsesEgoWaypointsAndTokenMean) {
  // Class 1 reads ego y at t=2, class 3 reads channel 1 of the token mean.
  Tensor w({4, 8});
  w.at({1, 5}) = 1.0;
  w.at({3, 7}) = 1.0;
  const LinearHead head(w, Tensor({4}), {0, 1, 2});
  Tensor x({2, 3, 4});
  x.at({0, 2, 1}) = 2.0;
  x.at({1, 2, 1}) = 100.0;  // not the ego agent
  Tensor c({2, 2});
  c.at({0, 1}) = 1.0;
  c.at({1, 1}) = 2.0;
  const TurnLogits l = head.logits(x, {c});
  EXPECT_DOUBLE_EQ(l[1], 2.0);
  EXPECT_DOUBLE_EQ(l[3], 1.5);
  EXPECT_EQ(argmax_class(l), 1);
}

TEST(LinearHead, ShapeMismatchThrows) {
  const LinearHead head = LinearHead::random(1, 5, 3);
  EXPECT_THROW(head.logits(Tensor({1, 4, 4}), {Tensor({2, 3})}), std::invalid_argument);
  EXPECT_THROW(head.logits(Tensor({1, 5, 4}), {Tensor({2, 4})}), std::invalid_argument);
  EXPECT_NO_THROW(head.logits(Tensor({1, 5, 4}), {Tensor({2, 3})}));
  EXPECT_THROW(LinearHead(Tensor({3, 4}), Tensor({4}), {}), std::invalid_argument);
}

TEST(PadWithCurrentState, PrependsIndexZero) {
  Tensor x({2, 3, 2});
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = 100.0 + i;
  const std::vector<double> future{1, 2, 3, 4, 5, 6, 7, 8};
  Tensor out({2, 3, 2});
  pad_with_current_state(x, future, out);
  const std::vector<double> expect{100, 101, 1, 2, 3, 4, 106, 107, 5, 6, 7, 8};
  EXPECT_EQ(std::vector<double>(out.values().begin(), out.values().end()), expect);
  EXPECT_THROW(pad_with_current_state(x, std::vector<double>(7), out), std::invalid_argument);
}
