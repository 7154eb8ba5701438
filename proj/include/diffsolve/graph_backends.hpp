#pragma once

// Model interfaces backed by extracted graph modules, run through the
// reference interpreter. These allocate per call and are meant for checking
// the pipeline against exported graphs, not for speed.

#include "diffsolve/denoiser.hpp"
#include "diffsolve/graph_analysis.hpp"
#include "diffsolve/interpreter.hpp"

namespace diffsolve::graph {

// Flattens the scene into the encoder's single input and returns its first output.
class GraphEncoder final : public EncoderModel {
 public:
  explicit GraphEncoder(Graph encoder);
  ContextEmbedding encode(const SceneContext& ctx) const override;
  std::uint64_t weights_fingerprint() const override { return fingerprint_; }

 private:
  Interpreter interp_;
  std::uint64_t fingerprint_;
};

// A core whose output covers T-1 future steps is padded back to T with the
// anchored current state.
class GraphDenoiser final : public DenoiserModel {
 public:
  GraphDenoiser(Graph core, const DecompositionReport& names);
  void predict(const Tensor& x_t, const ContextEmbedding& c, double t, Tensor& out) const override;
  std::uint64_t weights_fingerprint() const override { return fingerprint_; }

 private:
  Interpreter interp_;
  std::string x_name_, t_name_, c_name_, out_name_;
  std::uint64_t fingerprint_;
};

class GraphHead final : public TurnHead {
 public:
  GraphHead(Graph head, const DecompositionReport& names);
  TurnLogits logits(const Tensor& x0_hat, const ContextEmbedding& c) const override;
  std::uint64_t weights_fingerprint() const override { return fingerprint_; }

 private:
  Interpreter interp_;
  std::string x_name_, c_name_, out_name_;
  std::uint64_t fingerprint_;
};

}  // namespace diffsolve::graph
