#include "diffsolve/graph_backends.hpp"

#include <algorithm>

namespace diffsolve::graph {

namespace {

Tensor shaped_like(const Graph& g, const std::string& name, std::span<const double> values) {
  auto it = g.tensors.find(name);
  Shape shape = it != g.tensors.end() ? it->second.shape : Shape{values.size()};
  if (element_count(shape) != values.size()) {
    throw InterpretError("tensor '" + name + "' expects " + std::to_string(element_count(shape)) + " values, got " +
                         std::to_string(values.size()));
  }
  Tensor t(std::move(shape));
  std::copy(values.begin(), values.end(), t.values().begin());
  return t;
}

const Tensor& only(const TensorMap& m, const std::string& name) {
  auto it = m.find(name);
  if (it == m.end()) throw InterpretError("module produced no '" + name + "'");
  return it->second;
}

}  // namespace

GraphEncoder::GraphEncoder(Graph encoder) : interp_(std::move(encoder)), fingerprint_(weights_hash(interp_.graph())) {
  if (interp_.graph().inputs.size() != 1 || interp_.graph().outputs.empty()) {
    throw GraphError("encoder module needs exactly one input and at least one output");
  }
}

ContextEmbedding GraphEncoder::encode(const SceneContext& ctx) const {
  const Graph& g = interp_.graph();
  const std::vector<double> flat = ctx.flatten();
  TensorMap feeds;
  feeds.emplace(g.inputs[0], shaped_like(g, g.inputs[0], flat));
  return {only(interp_.run(feeds), g.outputs[0])};
}

GraphDenoiser::GraphDenoiser(Graph core, const DecompositionReport& names)
    : interp_(std::move(core)),
      x_name_(names.core_trajectory_input),
      t_name_(names.core_timestep_input),
      out_name_(names.core_output),
      fingerprint_(weights_hash(interp_.graph())) {
  if (names.boundary_tensors.size() != 1) throw GraphError("core module needs exactly one context input");
  c_name_ = names.boundary_tensors.front();
}

void GraphDenoiser::predict(const Tensor& x_t, const ContextEmbedding& c, double t, Tensor& out) const {
  const Graph& g = interp_.graph();
  TensorMap feeds;
  feeds.emplace(x_name_, shaped_like(g, x_name_, x_t.values()));
  feeds.emplace(c_name_, shaped_like(g, c_name_, c.values.values()));
  auto it = g.tensors.find(t_name_);
  Tensor tt(it != g.tensors.end() ? it->second.shape : Shape{1});
  tt.fill(t);
  feeds.emplace(t_name_, std::move(tt));
  const TensorMap result = interp_.run(feeds);
  const Tensor& y = only(result, out_name_);
  if (y.size() == out.size()) {
    std::copy(y.values().begin(), y.values().end(), out.values().begin());
  } else {
    pad_with_current_state(x_t, y.values(), out);
  }
}

GraphHead::GraphHead(Graph head, const DecompositionReport& names)
    : interp_(std::move(head)), x_name_(names.core_output), fingerprint_(weights_hash(interp_.graph())) {
  const Graph& g = interp_.graph();
  if (g.outputs.size() != 1) throw GraphError("head module needs exactly one output");
  out_name_ = g.outputs[0];
  for (const std::string& in : g.inputs)
    if (in != x_name_) c_name_ = in;
}

TurnLogits GraphHead::logits(const Tensor& x0_hat, const ContextEmbedding& c) const {
  const Graph& g = interp_.graph();
  TensorMap feeds;
  feeds.emplace(x_name_, shaped_like(g, x_name_, x0_hat.values()));
  if (!c_name_.empty()) feeds.emplace(c_name_, shaped_like(g, c_name_, c.values.values()));
  const TensorMap result = interp_.run(feeds);
  const Tensor& y = only(result, out_name_);
  if (y.size() != kTurnClasses) throw InterpretError("head produced " + std::to_string(y.size()) + " logits");
  TurnLogits out{};
  std::copy(y.values().begin(), y.values().end(), out.begin());
  return out;
}

}  // namespace diffsolve::graph
