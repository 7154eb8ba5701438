#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "diffsolve/graph.hpp"

namespace diffsolve::graph {

// One unrolled copy of the repeated core. nodes[p] corresponds to nodes[p]
// of every other region from the same detection.
struct CopyRegion {
  std::vector<std::string> nodes;
  std::size_t depth = 0;  // longest path from a source to the region's deepest node
};

struct RepeatDetection {
  std::string seed_weight;
  std::vector<CopyRegion> regions;  // topological order
  std::uint64_t canonical_label = 0;
  // One line per copy that was dropped, naming its seed node and why.
  std::vector<std::string> diagnostics;
};

// Seeds one region per consumer of the most widely shared weight, grows all
// regions in lockstep along dataflow edges while the candidates agree on op,
// attributes and referenced weights, then confirms with a Weisfeiler-Leman
// canonical label per region. A copy whose node references a different
// weight where the majority shares one is dropped as an outlier. Returns no
// regions (not an error) when no weight is shared.
RepeatDetection detect_repeats(const Graph& g);

struct EncoderSplit {
  std::vector<std::string> nodes;     // canonical order
  std::vector<std::string> boundary;  // tensors every copy consumes from upstream
};

// The encoder is everything upstream of the tensors that every copy reads
// from outside itself; those tensors form the boundary. With no encoder the
// boundary is the shared graph inputs. Throws ExtractionError when the copies
// share no upstream tensor or a copy feeds back into the encoder.
EncoderSplit identify_encoder(const Graph& g, const std::vector<CopyRegion>& copies);

class ExtractionError : public GraphError {
 public:
  using GraphError::GraphError;
};

struct DecompositionReport {
  std::size_t monolithic_node_count = 0;
  std::size_t copies_found = 0;
  std::size_t encoder_node_count = 0;
  std::size_t core_node_count = 0;  // original nodes, promoted constant included
  std::size_t head_node_count = 0;
  std::size_t duplicate_nodes_pruned = 0;
  std::size_t glue_nodes_pruned = 0;  // inter-copy solver arithmetic
  std::size_t dead_nodes_pruned = 0;
  std::vector<std::string> boundary_tensors;
  std::vector<std::string> diagnostics;
  std::vector<std::string> duplicated_weights;  // weights copied into more than one module

  // Bindings between the monolithic graph and the extracted modules.
  std::string promoted_constant;         // node id in the first copy, empty if none
  std::vector<double> copy_timesteps;    // promoted value per copy
  std::vector<std::string> copy_inputs;  // per-copy dynamic (trajectory) input in the monolith
  std::vector<std::string> copy_outputs;
  std::string trajectory_input;   // monolith input feeding the first copy
  std::string trajectory_output;  // last copy's output in the monolith
  std::vector<std::string> head_outputs;

  // Module tensor names.
  std::string core_trajectory_input = "x_t";
  std::string core_timestep_input = "t";
  std::string core_output = "x0_hat";

  std::size_t nodes_pruned() const { return duplicate_nodes_pruned + glue_nodes_pruned + dead_nodes_pruned; }
  std::size_t accounted_nodes() const {
    return encoder_node_count + core_node_count + head_node_count + nodes_pruned();
  }
  std::string to_json() const;
};

struct Modules {
  Graph encoder;
  Graph core;
  Graph head;
  DecompositionReport report;
};

// Splits a monolithic unrolled graph into encoder, one core copy (timestep
// promoted to input "t") and head; everything else is pruned. Every original
// node is accounted exactly once or ExtractionError is thrown, as it is when
// fewer than two copies are found.
Modules extract_modules(const Graph& g);

}  // namespace diffsolve::graph
