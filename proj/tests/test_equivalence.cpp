#include <gtest/gtest.h>

#include "diffsolve/equivalence.hpp"
#include "diffsolve/graph_backends.hpp"
#include "diffsolve/graph_fixture.hpp"
#include "diffsolve/interpreter.hpp"
#include "diffsolve/pipeline.hpp"
#include "diffsolve/rng.hpp"

using namespace diffsolve;
using namespace diffsolve::graph;

namespace {

struct Fixture {
  Graph mono = generate_unrolled_fixture(1, 11, 40, 12);
  Modules modules = extract_modules(mono);
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

SceneContext compact_scene(std::uint64_t seed) { return random_scene(seed, SceneLayout::compact()); }

}  // namespace

TEST(Equivalence, ReferenceFixturePasses) {
  const Fixture& f = fixture();
  const ErrorReport r = validate_equivalence(f.mono, f.modules, 10, 10);
  EXPECT_TRUE(r.pass()) << r.to_json();
  EXPECT_EQ(r.modules.size(), 13u);
  for (const ModuleError& m : r.modules) EXPECT_LT(m.max_abs_error, 1e-5) << m.name;
  EXPECT_LT(r.end_to_end.max_abs_error, 1e-4);
  EXPECT_LT(r.physical_bound_m, 2e-3);
  EXPECT_TRUE(r.turn_classes_match);
  EXPECT_TRUE(r.problems.empty());
}

TEST(Equivalence, StepCountMismatchIsAProblem) {
  const Fixture& f = fixture();
  const ErrorReport r = validate_equivalence(f.mono, f.modules, 7, 2);
  EXPECT_FALSE(r.pass());
  EXPECT_FALSE(r.problems.empty());
}

TEST(GraphBackends, MatchTheMonolith) {
  const Fixture& f = fixture();
  const GraphEncoder enc(f.modules.encoder);
  const GraphDenoiser den(f.modules.core, f.modules.report);
  const SceneContext ctx = compact_scene(3);
  const std::vector<double> flat = ctx.flatten();

  Rng rng(5);
  Tensor x_init({1, 48});
  for (double& v : x_init.values()) v = rng.normal();
  TensorMap feeds{{"scene", Tensor({1, 32}, flat)}, {"x_init", x_init}};
  const TensorMap all = Interpreter(f.mono).run(feeds, true);

  const ContextEmbedding c = enc.encode(ctx);
  EXPECT_EQ(c.values, all.at("context_embedding"));

  for (std::size_t i = 0; i < 11; ++i) {
    const Tensor& in = all.at(f.modules.report.copy_inputs[i]);
    Tensor x({2, 6, 4}, std::vector<double>(in.values().begin(), in.values().end()));
    Tensor out(x.shape());
    den.predict(x, c, f.modules.report.copy_timesteps[i], out);
    const Tensor& ref = all.at(f.modules.report.copy_outputs[i]);
    for (std::size_t k = 0; k < ref.size(); ++k) EXPECT_NEAR(out[k], ref[k], 1e-5) << "copy " << i;
  }
}

TEST(GraphBackends, HeadArgmaxMatchesDirectEvaluation) {
  const Fixture& f = fixture();
  const GraphHead head(f.modules.head, f.modules.report);
  const Weight& w = f.mono.weights.at("head.w");
  const Weight& b = f.mono.weights.at("head.b");
  Rng rng(9);
  for (int trial = 0; trial < 100; ++trial) {
    Tensor x({2, 6, 4});
    for (double& v : x.values()) v = rng.normal();
    Tensor c({1, 16});
    for (double& v : c.values()) v = rng.normal();
    std::vector<double> feat(x.values().begin(), x.values().end());
    feat.insert(feat.end(), c.values().begin(), c.values().end());
    TurnLogits direct{};
    for (std::size_t k = 0; k < 4; ++k) {
      direct[k] = b.data[k];
      for (std::size_t j = 0; j < feat.size(); ++j) direct[k] += feat[j] * double(w.data[j * 4 + k]);
    }
    const TurnLogits got = head.logits(x, {c});
    for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(got[k], direct[k], 1e-9);
    EXPECT_EQ(argmax_class(got), argmax_class(direct));
  }
}

TEST(GraphBackends, PlannerMatchesMonolith) {
  const Fixture& f = fixture();
  PlannerModels models;
  models.encoder = std::make_shared<GraphEncoder>(f.modules.encoder);
  models.denoiser = std::make_shared<GraphDenoiser>(f.modules.core, f.modules.report);
  models.head = std::make_shared<GraphHead>(f.modules.head, f.modules.report);
  models.trajectory_shape = {2, 6, 4};
  PlannerConfig cfg;
  cfg.n_steps = 10;
  cfg.order = 1;
  cfg.anchor.slots.clear();
  Planner planner(models, cfg);

  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const SceneContext ctx = compact_scene(seed);
    const PlanResult r = planner.plan(ctx);
    const TensorMap out =
        interpret(f.mono, {{"scene", Tensor({1, 32}, ctx.flatten())}, {"x_init", Tensor({1, 48})}});
    const Tensor& ref = out.at("trajectory");
    double err = 0;
    for (std::size_t k = 0; k < ref.size(); ++k) err = std::max(err, std::abs(r.normalized_trajectory[k] - ref[k]));
    EXPECT_LT(err, 1e-4);
    const Tensor& logits = out.at("turn_logits");
    TurnLogits ref_logits{};
    std::copy(logits.values().begin(), logits.values().end(), ref_logits.begin());
    EXPECT_EQ(r.turn, argmax_class(ref_logits));
    EXPECT_EQ(r.stats.encoder_calls, 1u);
    EXPECT_EQ(r.stats.core_calls, 11u);
  }
}
