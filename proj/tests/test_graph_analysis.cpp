#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "diffsolve/graph_analysis.hpp"
#include "diffsolve/graph_fixture.hpp"
#include "diffsolve/graph_io.hpp"
#include "json.hpp"

using namespace diffsolve;
using namespace diffsolve::graph;

namespace {

std::vector<std::string> encoder_ids(const Graph& g) {
  std::vector<std::string> ids;
  for (const Node& n : g.nodes)
    if (n.id.starts_with("enc/")) ids.push_back(n.id);
  std::sort(ids.begin(), ids.end());
  return ids;
}

std::vector<std::string> sorted(std::vector<std::string> v) {
  std::sort(v.begin(), v.end());
  return v;
}

}  // namespace

TEST(DetectRepeats, FindsEveryCopy) {
  const Graph g = generate_unrolled_fixture(1, 11, 40, 12);
  const RepeatDetection d = detect_repeats(g);
  ASSERT_EQ(d.regions.size(), 11u);
  for (std::size_t i = 0; i < d.regions.size(); ++i) {
    EXPECT_EQ(d.regions[i].nodes.size(), 12u);
    const std::string prefix = "dit" + std::to_string(i) + "/";
    for (const std::string& id : d.regions[i].nodes) EXPECT_TRUE(id.starts_with(prefix)) << id;
  }
  EXPECT_TRUE(d.diagnostics.empty());
}

TEST(DetectRepeats, NoSharedWeightMeansNoRegions) {
  Graph g;
  g.name = "plain";
  g.inputs = {"x"};
  g.outputs = {"z"};
  g.weights["a"] = {{2, 2}, {1, 0, 0, 1}};
  g.weights["b"] = {{2, 2}, {1, 0, 0, 1}};
  g.nodes.push_back({"m0", OpKind::MatMul, {"x", "a"}, {"y"}, {}});
  g.nodes.push_back({"m1", OpKind::MatMul, {"y", "b"}, {"z"}, {}});
  EXPECT_TRUE(detect_repeats(g).regions.empty());
  EXPECT_THROW(extract_modules(g), ExtractionError);
}

TEST(DetectRepeats, ForkedWeightDropsOutlier) {
  Graph g = generate_unrolled_fixture(1, 11, 40, 12);
  g.weights["core.w_x_fork"] = g.weights.at("core.w_x");
  for (Node& n : g.nodes)
    if (n.id == "dit5/xproj") n.inputs[1] = "core.w_x_fork";
  const RepeatDetection d = detect_repeats(g);
  EXPECT_EQ(d.regions.size(), 10u);
  ASSERT_EQ(d.diagnostics.size(), 1u);
  EXPECT_NE(d.diagnostics[0].find("dit5/"), std::string::npos);
  for (const CopyRegion& r : d.regions) EXPECT_FALSE(r.nodes.front().starts_with("dit5/"));
}

TEST(DetectRepeats, CanonicalLabelIsStable) {
  const RepeatDetection a = detect_repeats(generate_unrolled_fixture(1, 5, 6, 10));
  const RepeatDetection b = detect_repeats(generate_unrolled_fixture(2, 5, 6, 10));
  EXPECT_EQ(a.canonical_label, b.canonical_label);
  EXPECT_NE(a.canonical_label, detect_repeats(generate_unrolled_fixture(1, 5, 6, 11)).canonical_label);
}

TEST(IdentifyEncoder, MatchesEncoderNodes) {
  const Graph g = generate_unrolled_fixture(1, 11, 40, 12);
  const EncoderSplit s = identify_encoder(g, detect_repeats(g).regions);
  EXPECT_EQ(sorted(s.nodes), encoder_ids(g));
  EXPECT_EQ(s.boundary, std::vector<std::string>{"context_embedding"});
}

TEST(IdentifyEncoder, HeadWithoutContext) {
  FixtureOptions opt;
  opt.head_uses_context = false;
  const Graph g = generate_unrolled_fixture(1, 6, 9, 9, opt);
  const Modules m = extract_modules(g);
  EXPECT_EQ(m.report.encoder_node_count, 9u);
  EXPECT_EQ(m.report.head_node_count, 3u);
  EXPECT_EQ(m.head.inputs, std::vector<std::string>{"x0_hat"});
}

TEST(IdentifyEncoder, EmptyEncoder) {
  const Graph g = generate_unrolled_fixture(1, 4, 0, 9);
  const EncoderSplit s = identify_encoder(g, detect_repeats(g).regions);
  EXPECT_TRUE(s.nodes.empty());
  EXPECT_EQ(s.boundary, std::vector<std::string>{"scene"});
  const Modules m = extract_modules(g);
  EXPECT_EQ(m.report.encoder_node_count, 0u);
  EXPECT_EQ(m.report.accounted_nodes(), g.nodes.size());
}

TEST(ExtractModules, ReferenceFixtureCounts) {
  const Graph g = generate_unrolled_fixture(1, 11, 40, 12);
  const Modules m = extract_modules(g);
  const DecompositionReport& r = m.report;
  EXPECT_EQ(r.monolithic_node_count, 205u);
  EXPECT_EQ(r.copies_found, 11u);
  EXPECT_EQ(r.encoder_node_count, 40u);
  EXPECT_EQ(r.core_node_count, 12u);
  EXPECT_EQ(r.duplicate_nodes_pruned, 120u);
  EXPECT_LE(r.head_node_count, 7u);
  EXPECT_EQ(r.glue_nodes_pruned, 30u);
  EXPECT_EQ(r.dead_nodes_pruned, 0u);
  EXPECT_EQ(r.accounted_nodes(), r.monolithic_node_count);

  EXPECT_EQ(m.encoder.nodes.size(), 40u);
  EXPECT_EQ(m.core.nodes.size(), 11u);  // timestep constant promoted to an input
  EXPECT_EQ(sorted(m.core.inputs), sorted({"x_t", "context_embedding", "t"}));
  EXPECT_EQ(m.core.outputs, std::vector<std::string>{"x0_hat"});
  EXPECT_EQ(m.head.outputs, std::vector<std::string>{"turn_logits"});
  EXPECT_EQ(r.copy_timesteps.size(), 11u);
  EXPECT_EQ(r.trajectory_input, "x_init");
  EXPECT_EQ(r.trajectory_output, "trajectory");
  EXPECT_TRUE(std::is_sorted(r.copy_timesteps.rbegin(), r.copy_timesteps.rend()));
  EXPECT_NO_THROW(validate(m.encoder));
  EXPECT_NO_THROW(validate(m.core));
  EXPECT_NO_THROW(validate(m.head));
  EXPECT_TRUE(nlohmann::json::parse(r.to_json()).is_object());
}

TEST(ExtractModules, AccountingAcrossShapes) {
  std::mt19937 rng(3);
  for (int i = 0; i < 12; ++i) {
    const std::size_t copies = 2 + rng() % 9, enc = rng() % 12, core = kMinCoreSize + rng() % 7;
    const Graph g = generate_unrolled_fixture(rng(), copies, enc, core);
    const Modules m = extract_modules(g);
    SCOPED_TRACE(std::to_string(copies) + "/" + std::to_string(enc) + "/" + std::to_string(core));
    EXPECT_EQ(m.report.copies_found, copies);
    EXPECT_EQ(m.report.encoder_node_count, enc);
    EXPECT_EQ(m.report.core_node_count, core);
    EXPECT_EQ(m.report.duplicate_nodes_pruned, (copies - 1) * core);
    EXPECT_EQ(m.report.accounted_nodes(), g.nodes.size());
  }
}

TEST(ExtractModules, Idempotent) {
  const Graph g = generate_unrolled_fixture(4, 6, 9, 10);
  const Modules a = extract_modules(g), b = extract_modules(g);
  EXPECT_EQ(graph_to_json_text(a.core), graph_to_json_text(b.core));
  EXPECT_EQ(graph_to_json_text(a.encoder), graph_to_json_text(b.encoder));
  EXPECT_EQ(graph_to_json_text(a.head), graph_to_json_text(b.head));
  EXPECT_EQ(a.report.to_json(), b.report.to_json());
}

TEST(ExtractModules, NodeOrderInvariant) {
  Graph g = generate_unrolled_fixture(4, 6, 9, 10);
  const Modules ref = extract_modules(g);
  std::mt19937 rng(11);
  for (int i = 0; i < 3; ++i) {
    std::shuffle(g.nodes.begin(), g.nodes.end(), rng);
    const Modules m = extract_modules(g);
    EXPECT_EQ(graph_to_json_text(m.core), graph_to_json_text(ref.core));
    EXPECT_EQ(graph_to_json_text(m.encoder), graph_to_json_text(ref.encoder));
    EXPECT_EQ(graph_to_json_text(m.head), graph_to_json_text(ref.head));
    EXPECT_EQ(m.report.to_json(), ref.report.to_json());
  }
}

TEST(ExtractModules, DeadNodesArePruned) {
  Graph g = generate_unrolled_fixture(1, 4, 6, 9);
  g.nodes.push_back({"unused", OpKind::Gelu, {"dit1/act0:out"}, {"unused:out"}, {{"approximate", std::string("none")}}});
  const Modules m = extract_modules(g);
  EXPECT_EQ(m.report.dead_nodes_pruned, 1u);
  EXPECT_EQ(m.report.accounted_nodes(), g.nodes.size());
}

TEST(ExtractModules, UnclassifiableNodeFails) {
  Graph g = generate_unrolled_fixture(1, 6, 6, 9);
  g.nodes.push_back({"probe", OpKind::Gelu, {"dit3/act0:out"}, {"probe:out"}, {{"approximate", std::string("none")}}});
  g.outputs.push_back("probe:out");
  try {
    extract_modules(g);
    FAIL() << "expected ExtractionError";
  } catch (const ExtractionError& e) {
    EXPECT_NE(std::string(e.what()).find("probe"), std::string::npos) << e.what();
  }
}

TEST(ExtractModules, ModulesDoNotReextract) {
  const Modules m = extract_modules(generate_unrolled_fixture(1, 4, 6, 9));
  EXPECT_THROW(extract_modules(m.core), ExtractionError);
}
