#pragma once

#include <filesystem>
#include <string>

#include "diffsolve/graph.hpp"

namespace diffsolve::graph {

// Graph-JSON v1:
//   {"format": "diffsolve-graph", "version": 1, "name": ..., "inputs": [...], "outputs": [...],
//    "tensors": {name: {"shape": [...], "dtype": "float32"}},
//    "weights": {name: {"shape": [...], "dtype": "float32", "data": <base64 little-endian f32>}},
//    "nodes": [{"id", "op", "inputs", "outputs", "attrs"}]}
// The canonical form has sorted keys and nodes in canonical topological order.

// Carries a JSON pointer to the offending field.
class GraphSchemaError : public GraphError {
 public:
  GraphSchemaError(std::string pointer, const std::string& what);
  const std::string& pointer() const { return pointer_; }

 private:
  std::string pointer_;
};

Graph graph_from_json_text(const std::string& text);
std::string graph_to_json_text(const Graph& g);  // canonical

Graph load_graph(const std::filesystem::path& path);
void save_graph(const Graph& g, const std::filesystem::path& path);

std::string base64_encode(const void* data, std::size_t n);
std::string base64_decode(const std::string& text);

}  // namespace diffsolve::graph
