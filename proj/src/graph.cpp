#include "diffsolve/graph.hpp"

#include <algorithm>
#include <bit>
#include <queue>
#include <set>
#include <sstream>

#include "diffsolve/rng.hpp"

namespace diffsolve::graph {

namespace {

struct OpSpec {
  OpKind op;
  const char* name;
  int min_inputs;
  int max_inputs;  // -1: unbounded
  // attribute name -> required variant index in AttrValue
  std::vector<std::pair<const char*, std::size_t>> attrs;
};

constexpr std::size_t kInt = 0, kReal = 1, kString = 2, kInts = 3, kReals = 4;

const std::vector<OpSpec>& op_specs() {
  static const std::vector<OpSpec> specs{
      {OpKind::MatMul, "MatMul", 2, 2, {}},
      {OpKind::Add, "Add", 2, 2, {}},
      {OpKind::Mul, "Mul", 2, 2, {}},
      {OpKind::LayerNorm, "LayerNorm", 3, 3, {{"epsilon", kReal}}},
      {OpKind::Gelu, "Gelu", 1, 1, {{"approximate", kString}}},
      {OpKind::Concat, "Concat", 1, -1, {{"axis", kInt}}},
      {OpKind::Slice, "Slice", 1, 1, {{"axis", kInt}, {"start", kInt}, {"end", kInt}}},
      {OpKind::Reshape, "Reshape", 1, 1, {{"shape", kInts}}},
      {OpKind::Constant, "Constant", 0, 0, {{"shape", kInts}, {"value", kReals}}},
  };
  return specs;
}

const OpSpec& spec_for(OpKind op) {
  for (const OpSpec& s : op_specs())
    if (s.op == op) return s;
  throw GraphError("unknown op kind");
}

}  // namespace

std::string_view to_string(OpKind op) { return spec_for(op).name; }

std::optional<OpKind> parse_op_kind(std::string_view name) {
  for (const OpSpec& s : op_specs())
    if (name == s.name) return s.op;
  return std::nullopt;
}

const Node* Graph::find_node(std::string_view id) const {
  for (const Node& n : nodes)
    if (n.id == id) return &n;
  return nullptr;
}

std::size_t Graph::node_index(std::string_view id) const {
  for (std::size_t i = 0; i < nodes.size(); ++i)
    if (nodes[i].id == id) return i;
  throw GraphError("no node '" + std::string(id) + "'");
}

bool Graph::is_input(const std::string& tensor) const {
  return std::find(inputs.begin(), inputs.end(), tensor) != inputs.end();
}

void check_node_schema(const Node& node) {
  const OpSpec& s = spec_for(node.op);
  const auto n_in = static_cast<int>(node.inputs.size());
  if (n_in < s.min_inputs || (s.max_inputs >= 0 && n_in > s.max_inputs)) {
    throw GraphError("node '" + node.id + "' (" + s.name + "): " + std::to_string(n_in) + " inputs, expected " +
                     std::to_string(s.min_inputs) +
                     (s.max_inputs == s.min_inputs ? "" : s.max_inputs < 0 ? "+" : "-" + std::to_string(s.max_inputs)));
  }
  if (node.outputs.size() != 1) {
    throw GraphError("node '" + node.id + "' (" + s.name + "): expected exactly 1 output");
  }
  for (const auto& [key, index] : s.attrs) {
    auto it = node.attrs.find(key);
    if (it == node.attrs.end()) {
      throw GraphError("node '" + node.id + "' (" + s.name + "): missing attribute '" + key + "'");
    }
    if (it->second.index() != index) {
      throw GraphError("node '" + node.id + "' (" + s.name + "): attribute '" + key + "' has the wrong type");
    }
  }
  for (const auto& [key, value] : node.attrs) {
    const bool known = std::any_of(s.attrs.begin(), s.attrs.end(), [&](const auto& a) { return key == a.first; });
    if (!known) throw GraphError("node '" + node.id + "' (" + s.name + "): unexpected attribute '" + key + "'");
  }
  if (node.op == OpKind::Constant) {
    const IntList& shape = std::get<IntList>(node.attrs.at("shape"));
    std::size_t n = 1;
    for (auto d : shape) {
      if (d < 0) throw GraphError("node '" + node.id + "': negative Constant dim");
      n *= static_cast<std::size_t>(d);
    }
    if (n != std::get<RealList>(node.attrs.at("value")).size()) {
      throw GraphError("node '" + node.id + "': Constant value count does not match shape");
    }
  }
  if (node.op == OpKind::Gelu) {
    const auto& a = std::get<std::string>(node.attrs.at("approximate"));
    if (a != "none" && a != "tanh") throw GraphError("node '" + node.id + "': approximate must be none|tanh");
  }
}

Dataflow::Dataflow(const Graph& g) : preds(g.nodes.size()), succs(g.nodes.size()) {
  for (std::size_t i = 0; i < g.nodes.size(); ++i)
    for (const std::string& out : g.nodes[i].outputs) producer[out] = i;
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    const Node& n = g.nodes[i];
    for (std::size_t s = 0; s < n.inputs.size(); ++s) {
      consumers[n.inputs[s]].emplace_back(i, s);
      auto it = producer.find(n.inputs[s]);
      if (it != producer.end()) {
        preds[i].push_back(it->second);
        succs[it->second].push_back(i);
      }
    }
  }
  auto dedupe = [](std::vector<std::size_t>& v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  };
  for (auto& v : preds) dedupe(v);
  for (auto& v : succs) dedupe(v);
  for (auto& [tensor, list] : consumers) {
    std::sort(list.begin(), list.end(), [&](const auto& a, const auto& b) {
      if (g.nodes[a.first].id != g.nodes[b.first].id) return g.nodes[a.first].id < g.nodes[b.first].id;
      return a.second < b.second;
    });
  }
}

std::vector<std::size_t> canonical_order(const Graph& g) {
  const Dataflow df(g);
  std::vector<std::size_t> indegree(g.nodes.size());
  for (std::size_t i = 0; i < g.nodes.size(); ++i) indegree[i] = df.preds[i].size();
  auto by_id = [&](std::size_t a, std::size_t b) { return g.nodes[a].id > g.nodes[b].id; };
  std::priority_queue<std::size_t, std::vector<std::size_t>, decltype(by_id)> ready(by_id);
  for (std::size_t i = 0; i < g.nodes.size(); ++i)
    if (indegree[i] == 0) ready.push(i);
  std::vector<std::size_t> order;
  order.reserve(g.nodes.size());
  while (!ready.empty()) {
    const std::size_t i = ready.top();
    ready.pop();
    order.push_back(i);
    for (std::size_t j : df.succs[i])
      if (--indegree[j] == 0) ready.push(j);
  }
  if (order.size() != g.nodes.size()) throw GraphError("graph '" + g.name + "' contains a cycle");
  return order;
}

void canonicalize(Graph& g) {
  const std::vector<std::size_t> order = canonical_order(g);
  std::vector<Node> sorted;
  sorted.reserve(order.size());
  for (std::size_t i : order) sorted.push_back(std::move(g.nodes[i]));
  g.nodes = std::move(sorted);
}

void validate(const Graph& g) {
  std::set<std::string> ids;
  std::set<std::string> produced;
  for (const Node& n : g.nodes) {
    check_node_schema(n);
    if (!ids.insert(n.id).second) throw GraphError("duplicate node id '" + n.id + "'");
    for (const std::string& out : n.outputs) {
      if (g.is_weight(out) || g.is_input(out)) {
        throw GraphError("node '" + n.id + "' writes '" + out + "', which is a graph input or weight");
      }
      if (!produced.insert(out).second) throw GraphError("tensor '" + out + "' has more than one producer");
    }
  }
  for (const std::string& in : g.inputs) {
    if (g.is_weight(in)) throw GraphError("graph input '" + in + "' is also a weight");
  }
  for (const Node& n : g.nodes) {
    for (const std::string& in : n.inputs) {
      if (!g.is_input(in) && !g.is_weight(in) && !produced.count(in)) {
        throw GraphError("node '" + n.id + "' reads '" + in + "', which is not a graph input, weight, or node output");
      }
    }
  }
  for (const std::string& out : g.outputs) {
    if (!produced.count(out) && !g.is_input(out)) throw GraphError("graph output '" + out + "' is never produced");
  }
  for (const auto& [name, w] : g.weights) {
    if (w.data.size() != element_count(w.shape)) {
      throw GraphError("weight '" + name + "': " + std::to_string(w.data.size()) + " values for shape " +
                       shape_to_string(w.shape));
    }
  }
  canonical_order(g);
}

std::vector<std::size_t> node_depths(const Graph& g, const Dataflow& df) {
  std::vector<std::size_t> depth(g.nodes.size(), 0);
  for (std::size_t i : canonical_order(g)) {
    std::size_t d = 0;
    for (std::size_t p : df.preds[i]) d = std::max(d, depth[p] + 1);
    depth[i] = d;
  }
  return depth;
}

std::uint64_t weights_hash(const Graph& g) {
  Fnv1a h;
  for (const auto& [name, w] : g.weights) {
    h.update(name.data(), name.size());
    for (std::size_t d : w.shape) h.update_value(static_cast<std::uint64_t>(d));
    h.update(w.data.data(), w.data.size() * sizeof(float));
  }
  return h.digest();
}

std::uint64_t attribute_hash(const Node& node, bool include_constant_values) {
  Fnv1a h;
  const std::string_view op = to_string(node.op);
  h.update(op.data(), op.size());
  for (const auto& [key, value] : node.attrs) {
    if (!include_constant_values && node.op == OpKind::Constant && key == "value") continue;
    h.update(key.data(), key.size() + 1);
    h.update_value(value.index());
    std::visit(
        [&](const auto& v) {
          using T = std::decay_t<decltype(v)>;
          if constexpr (std::is_same_v<T, std::string>) {
            h.update(v.data(), v.size());
          } else if constexpr (std::is_same_v<T, IntList> || std::is_same_v<T, RealList>) {
            for (auto x : v) h.update_value(x);
          } else {
            h.update_value(v);
          }
        },
        value);
  }
  return h.digest();
}

namespace {

template <class T>
const T& attr_as(const Node& n, const std::string& key) {
  auto it = n.attrs.find(key);
  if (it == n.attrs.end()) throw GraphError("node '" + n.id + "': missing attribute '" + key + "'");
  const T* v = std::get_if<T>(&it->second);
  if (!v) throw GraphError("node '" + n.id + "': attribute '" + key + "' has the wrong type");
  return *v;
}

}  // namespace

std::int64_t attr_int(const Node& n, const std::string& key) { return attr_as<std::int64_t>(n, key); }
double attr_real(const Node& n, const std::string& key) { return attr_as<double>(n, key); }
const std::string& attr_string(const Node& n, const std::string& key) { return attr_as<std::string>(n, key); }
const IntList& attr_ints(const Node& n, const std::string& key) { return attr_as<IntList>(n, key); }
const RealList& attr_reals(const Node& n, const std::string& key) { return attr_as<RealList>(n, key); }

Graph subgraph(const Graph& g, const std::vector<std::size_t>& keep, std::vector<std::string> inputs,
               std::vector<std::string> outputs, std::string name) {
  Graph out;
  out.name = std::move(name);
  out.inputs = std::move(inputs);
  out.outputs = std::move(outputs);
  std::set<std::string> referenced(out.inputs.begin(), out.inputs.end());
  referenced.insert(out.outputs.begin(), out.outputs.end());
  for (std::size_t i : keep) {
    const Node& n = g.nodes[i];
    out.nodes.push_back(n);
    referenced.insert(n.inputs.begin(), n.inputs.end());
    referenced.insert(n.outputs.begin(), n.outputs.end());
  }
  for (const std::string& t : referenced) {
    if (auto w = g.weights.find(t); w != g.weights.end()) out.weights.emplace(t, w->second);
    if (auto info = g.tensors.find(t); info != g.tensors.end() && !g.is_weight(t)) out.tensors.emplace(t, info->second);
  }
  canonicalize(out);
  return out;
}

}  // namespace diffsolve::graph
