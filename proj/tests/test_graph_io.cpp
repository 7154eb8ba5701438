#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <random>

#include "diffsolve/graph_fixture.hpp"
#include "diffsolve/graph_io.hpp"
#include "json.hpp"

using namespace diffsolve;
using namespace diffsolve::graph;

namespace {

Graph one_node() {
  Graph g;
  g.name = "one";
  g.inputs = {"x"};
  g.outputs = {"y"};
  g.tensors["x"] = {{1, 2}, "float32"};
  g.tensors["y"] = {{1, 3}, "float32"};
  g.weights["w"] = {{2, 3}, {1.f, 2.f, 3.f, -4.f, 0.5f, 1e-30f}};
  g.nodes.push_back({"mm", OpKind::MatMul, {"x", "w"}, {"y"}, {}});
  return g;
}

}  // namespace

TEST(GraphIo, SingleNodeRoundTrip) {
  const Graph g = one_node();
  const Graph back = graph_from_json_text(graph_to_json_text(g));
  EXPECT_EQ(back, g);
}

TEST(GraphIo, FixtureRoundTripIsByteIdentical) {
  const Graph g = generate_unrolled_fixture(3, 4, 6, 9);
  const std::string text = graph_to_json_text(g);
  EXPECT_EQ(graph_to_json_text(graph_from_json_text(text)), text);
  EXPECT_EQ(graph_from_json_text(text), g);
}

TEST(GraphIo, SaveAndLoad) {
  const auto path = std::filesystem::temp_directory_path() / "diffsolve_io_test.json";
  const Graph g = generate_unrolled_fixture(1, 3, 3, 8);
  save_graph(g, path);
  EXPECT_EQ(load_graph(path), g);
  std::filesystem::remove(path);
  EXPECT_THROW(load_graph(path), std::ios_base::failure);
}

TEST(GraphIo, UnknownOpReportsPointer) {
  auto j = nlohmann::json::parse(graph_to_json_text(one_node()));
  j["nodes"][0]["op"] = "Conv";
  try {
    graph_from_json_text(j.dump());
    FAIL() << "expected GraphSchemaError";
  } catch (const GraphSchemaError& e) {
    EXPECT_EQ(e.pointer(), "/nodes/0/op");
    EXPECT_NE(std::string(e.what()).find("mm"), std::string::npos);
  }
}

TEST(GraphIo, MissingFieldReportsPointer) {
  auto j = nlohmann::json::parse(graph_to_json_text(one_node()));
  j["nodes"][0].erase("inputs");
  try {
    graph_from_json_text(j.dump());
    FAIL();
  } catch (const GraphSchemaError& e) {
    EXPECT_EQ(e.pointer(), "/nodes/0/inputs");
  }
}

TEST(GraphIo, BadWeightPayload) {
  auto j = nlohmann::json::parse(graph_to_json_text(one_node()));
  j["weights"]["w"]["data"] = "!!!not base64";
  try {
    graph_from_json_text(j.dump());
    FAIL();
  } catch (const GraphSchemaError& e) {
    EXPECT_EQ(e.pointer(), "/weights/w/data");
  }
  j["weights"]["w"]["data"] = base64_encode("abcd", 4);
  EXPECT_THROW(graph_from_json_text(j.dump()), GraphSchemaError);
}

TEST(GraphIo, InvalidJson) {
  EXPECT_THROW(graph_from_json_text("{\"nodes\": ["), GraphSchemaError);
  EXPECT_THROW(graph_from_json_text("[]"), GraphSchemaError);
}

TEST(GraphIo, DanglingInputRejected) {
  Graph g = one_node();
  g.nodes[0].inputs[0] = "nowhere";
  EXPECT_THROW(graph_from_json_text(graph_to_json_text(g)), GraphError);
}

TEST(Base64, RoundTrip) {
  for (std::size_t n = 0; n < 20; ++n) {
    std::string s;
    for (std::size_t i = 0; i < n; ++i) s.push_back(static_cast<char>(i * 37 + 5));
    EXPECT_EQ(base64_decode(base64_encode(s.data(), s.size())), s);
  }
  EXPECT_EQ(base64_encode("Man", 3), "TWFu");
  EXPECT_EQ(base64_encode("Ma", 2), "TWE=");
  EXPECT_THROW(base64_decode("TWF"), std::exception);
}

TEST(Fixture, DeterministicAndSeedDependent) {
  EXPECT_EQ(graph_to_json_text(generate_unrolled_fixture(5, 4, 6, 9)),
            graph_to_json_text(generate_unrolled_fixture(5, 4, 6, 9)));
  EXPECT_NE(weights_hash(generate_unrolled_fixture(5, 4, 6, 9)), weights_hash(generate_unrolled_fixture(6, 4, 6, 9)));
}

TEST(Fixture, CoreWeightsSharedAcrossCopies) {
  const Graph g = generate_unrolled_fixture(1, 11, 40, 12);
  const Dataflow df(g);
  for (const char* w : {"core.w_x", "core.w_c", "core.w_t", "core.w_o"}) {
    EXPECT_EQ(df.consumers.at(w).size(), 11u) << w;
  }
  EXPECT_EQ(g.nodes.size(), fixture_node_count(11, 40, 12));
  EXPECT_EQ(g.nodes.size(), 205u);
}

TEST(Fixture, RejectsBadSizes) {
  EXPECT_THROW(generate_unrolled_fixture(1, 1, 4, 9), std::invalid_argument);
  EXPECT_THROW(generate_unrolled_fixture(1, 3, 4, kMinCoreSize - 1), std::invalid_argument);
}

TEST(Canonical, NodeOrderDoesNotMatter) {
  Graph g = generate_unrolled_fixture(2, 4, 6, 10);
  const std::string text = graph_to_json_text(g);
  std::mt19937 rng(7);
  for (int i = 0; i < 5; ++i) {
    std::shuffle(g.nodes.begin(), g.nodes.end(), rng);
    EXPECT_EQ(graph_to_json_text(g), text);
  }
}
