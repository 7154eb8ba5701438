#pragma once

// Minimal ONNX-like dataflow IR: named tensors, float32 initializers
// ("weights"), and a closed set of op kinds with a fixed attribute schema.

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

#include "diffsolve/tensor.hpp"

namespace diffsolve::graph {

enum class OpKind { MatMul, Add, Mul, LayerNorm, Gelu, Concat, Slice, Reshape, Constant };

std::string_view to_string(OpKind op);
std::optional<OpKind> parse_op_kind(std::string_view name);

using IntList = std::vector<std::int64_t>;
using RealList = std::vector<double>;
using AttrValue = std::variant<std::int64_t, double, std::string, IntList, RealList>;
using Attributes = std::map<std::string, AttrValue>;

struct Node {
  std::string id;
  OpKind op;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  Attributes attrs;

  friend bool operator==(const Node&, const Node&) = default;
};

struct TensorInfo {
  Shape shape;
  std::string dtype = "float32";
  friend bool operator==(const TensorInfo&, const TensorInfo&) = default;
};

struct Weight {
  Shape shape;
  std::vector<float> data;
  friend bool operator==(const Weight&, const Weight&) = default;
};

struct Graph {
  std::string name;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  std::map<std::string, TensorInfo> tensors;
  std::map<std::string, Weight> weights;
  std::vector<Node> nodes;

  const Node* find_node(std::string_view id) const;
  std::size_t node_index(std::string_view id) const;  // throws if absent
  bool is_weight(const std::string& tensor) const { return weights.count(tensor) != 0; }
  bool is_input(const std::string& tensor) const;

  friend bool operator==(const Graph&, const Graph&) = default;
};

class GraphError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Producer/consumer tables over a validated graph. Node indices refer to
// Graph::nodes at construction time.
struct Dataflow {
  explicit Dataflow(const Graph& g);

  std::unordered_map<std::string, std::size_t> producer;
  // tensor -> (node index, input slot), ordered by node id then slot
  std::unordered_map<std::string, std::vector<std::pair<std::size_t, std::size_t>>> consumers;
  std::vector<std::vector<std::size_t>> preds;  // distinct producer nodes per node
  std::vector<std::vector<std::size_t>> succs;  // distinct consumer nodes per node
};

// Attribute schema and arity per op kind. Throws GraphError naming the node.
void check_node_schema(const Node& node);

// Checks node schemas, unique ids and producers, that every input resolves to
// a graph input, a weight, or an earlier-produced tensor, acyclicity, and that
// every graph output is produced.
void validate(const Graph& g);

// Topological order with ties broken by node id, so the result does not
// depend on the order nodes were listed in. Throws GraphError on a cycle.
std::vector<std::size_t> canonical_order(const Graph& g);
void canonicalize(Graph& g);

// Longest path (in nodes) from any source to each node.
std::vector<std::size_t> node_depths(const Graph& g, const Dataflow& df);

// Stable content hashes.
std::uint64_t weights_hash(const Graph& g);
std::uint64_t attribute_hash(const Node& node, bool include_constant_values = true);

// Attribute getters; throw GraphError on absence or type mismatch.
std::int64_t attr_int(const Node& n, const std::string& key);
double attr_real(const Node& n, const std::string& key);
const std::string& attr_string(const Node& n, const std::string& key);
const IntList& attr_ints(const Node& n, const std::string& key);
const RealList& attr_reals(const Node& n, const std::string& key);

// Keeps only `keep` (by index) plus the weights and tensor metadata they reference.
Graph subgraph(const Graph& g, const std::vector<std::size_t>& keep, std::vector<std::string> inputs,
               std::vector<std::string> outputs, std::string name);

}  // namespace diffsolve::graph
