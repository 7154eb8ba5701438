#pragma once

#include <map>
#include <string>

#include "diffsolve/graph.hpp"
#include "diffsolve/tensor.hpp"

namespace diffsolve::graph {

using TensorMap = std::map<std::string, Tensor>;

class InterpretError : public GraphError {
 public:
  using GraphError::GraphError;
};

// Reference evaluator. Runs nodes in canonical topological order with 64-bit
// arithmetic regardless of declared dtypes. Single-threaded and deterministic.
class Interpreter {
 public:
  explicit Interpreter(Graph g);

  // Returns the graph outputs, or every tensor (weights excluded) when
  // capture_all is set. Throws InterpretError on a missing feed or a shape
  // mismatch, naming the node.
  TensorMap run(const TensorMap& feeds, bool capture_all = false) const;

  const Graph& graph() const { return graph_; }

 private:
  Graph graph_;
  std::vector<std::size_t> order_;
  TensorMap weights_;
};

TensorMap interpret(const Graph& g, const TensorMap& feeds, bool capture_all = false);

}  // namespace diffsolve::graph
