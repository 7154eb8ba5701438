#include "diffsolve/graph_io.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace diffsolve::graph {

using nlohmann::json;

GraphSchemaError::GraphSchemaError(std::string pointer, const std::string& what)
    : GraphError("schema error at " + pointer + ": " + what), pointer_(std::move(pointer)) {}

namespace {

constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

static_assert(std::endian::native == std::endian::little, "weight payloads assume a little-endian host");

}  // namespace

std::string base64_encode(const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::string out;
  out.reserve((n + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 3 <= n; i += 3) {
    const std::uint32_t v = (p[i] << 16) | (p[i + 1] << 8) | p[i + 2];
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += kAlphabet[(v >> 6) & 63];
    out += kAlphabet[v & 63];
  }
  if (n - i == 1) {
    const std::uint32_t v = p[i] << 16;
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += "==";
  } else if (n - i == 2) {
    const std::uint32_t v = (p[i] << 16) | (p[i + 1] << 8);
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += kAlphabet[(v >> 6) & 63];
    out += '=';
  }
  return out;
}

std::string base64_decode(const std::string& text) {
  std::array<int, 256> lookup;
  lookup.fill(-1);
  for (int i = 0; i < 64; ++i) lookup[static_cast<unsigned char>(kAlphabet[i])] = i;
  if (text.size() % 4 != 0) throw std::invalid_argument("base64: length not a multiple of 4");
  std::string out;
  out.reserve(text.size() / 4 * 3);
  for (std::size_t i = 0; i < text.size(); i += 4) {
    std::uint32_t v = 0;
    int pad = 0;
    for (std::size_t k = 0; k < 4; ++k) {
      const char c = text[i + k];
      if (c == '=' && i + 4 == text.size() && k >= 2) {
        ++pad;
        v <<= 6;
        continue;
      }
      const int d = lookup[static_cast<unsigned char>(c)];
      if (d < 0 || pad) throw std::invalid_argument("base64: invalid character");
      v = (v << 6) | static_cast<std::uint32_t>(d);
    }
    out += static_cast<char>((v >> 16) & 0xff);
    if (pad < 2) out += static_cast<char>((v >> 8) & 0xff);
    if (pad < 1) out += static_cast<char>(v & 0xff);
  }
  return out;
}

namespace {

std::string ptr(const std::string& base, const std::string& key) { return base + "/" + key; }
std::string ptr(const std::string& base, std::size_t i) { return base + "/" + std::to_string(i); }

const json& field(const json& obj, const std::string& base, const char* key) {
  if (!obj.is_object()) throw GraphSchemaError(base.empty() ? "/" : base, "expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) throw GraphSchemaError(ptr(base, key), "missing required field");
  return *it;
}

std::string read_string(const json& j, const std::string& p) {
  if (!j.is_string()) throw GraphSchemaError(p, "expected a string");
  return j.get<std::string>();
}

std::vector<std::string> read_string_list(const json& j, const std::string& p) {
  if (!j.is_array()) throw GraphSchemaError(p, "expected an array of strings");
  std::vector<std::string> out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(read_string(j[i], ptr(p, i)));
  return out;
}

Shape read_shape(const json& j, const std::string& p) {
  if (!j.is_array()) throw GraphSchemaError(p, "expected an array of dimensions");
  Shape out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number_unsigned()) throw GraphSchemaError(ptr(p, i), "expected a non-negative integer");
    out.push_back(j[i].get<std::size_t>());
  }
  return out;
}

std::string read_dtype(const json& obj, const std::string& p) {
  auto it = obj.find("dtype");
  if (it == obj.end()) return "float32";
  std::string d = read_string(*it, ptr(p, "dtype"));
  if (d != "float32" && d != "float64") throw GraphSchemaError(ptr(p, "dtype"), "unsupported dtype '" + d + "'");
  return d;
}

AttrValue read_attr(const json& j, const std::string& p, const std::string& node_id) {
  auto fail = [&](const char* what) { throw GraphSchemaError(p, "node '" + node_id + "': " + what); };
  if (j.is_number_integer()) return j.get<std::int64_t>();
  if (j.is_number_float()) return j.get<double>();
  if (j.is_string()) return j.get<std::string>();
  if (j.is_array()) {
    bool all_int = true;
    for (const json& e : j) {
      if (!e.is_number()) fail("attribute arrays must hold numbers");
      if (!e.is_number_integer()) all_int = false;
    }
    if (all_int && !j.empty()) return j.get<IntList>();
    return j.get<RealList>();
  }
  fail("unsupported attribute value");
  return {};
}

// Integer-valued lists are legal where reals are expected (e.g. Constant values).
void coerce_attrs(Node& n) {
  auto want_reals = [&](const char* key) {
    auto it = n.attrs.find(key);
    if (it == n.attrs.end()) return;
    if (auto* ints = std::get_if<IntList>(&it->second)) it->second = RealList(ints->begin(), ints->end());
  };
  auto want_real = [&](const char* key) {
    auto it = n.attrs.find(key);
    if (it == n.attrs.end()) return;
    if (auto* i = std::get_if<std::int64_t>(&it->second)) it->second = static_cast<double>(*i);
  };
  if (n.op == OpKind::Constant) {
    want_reals("value");
    auto it = n.attrs.find("shape");
    // [] parses as an empty real list; a scalar constant has an empty int shape.
    if (it != n.attrs.end())
      if (auto* r = std::get_if<RealList>(&it->second); r && r->empty()) it->second = IntList{};
  }
  if (n.op == OpKind::LayerNorm) want_real("epsilon");
}

json attr_to_json(const AttrValue& v) {
  return std::visit([](const auto& x) { return json(x); }, v);
}

}  // namespace

Graph graph_from_json_text(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw GraphSchemaError("/", std::string("invalid JSON: ") + e.what());
  }
  if (!root.is_object()) throw GraphSchemaError("/", "expected an object");
  if (auto v = root.find("version"); v != root.end() && *v != 1) {
    throw GraphSchemaError("/version", "unsupported version");
  }

  Graph g;
  g.name = read_string(field(root, "", "name"), "/name");
  g.inputs = read_string_list(field(root, "", "inputs"), "/inputs");
  g.outputs = read_string_list(field(root, "", "outputs"), "/outputs");

  const json& tensors = field(root, "", "tensors");
  if (!tensors.is_object()) throw GraphSchemaError("/tensors", "expected an object");
  for (const auto& [name, info] : tensors.items()) {
    const std::string p = ptr("/tensors", name);
    TensorInfo ti;
    ti.shape = read_shape(field(info, p, "shape"), ptr(p, "shape"));
    ti.dtype = read_dtype(info, p);
    g.tensors.emplace(name, std::move(ti));
  }

  const json& weights = field(root, "", "weights");
  if (!weights.is_object()) throw GraphSchemaError("/weights", "expected an object");
  for (const auto& [name, info] : weights.items()) {
    const std::string p = ptr("/weights", name);
    Weight w;
    w.shape = read_shape(field(info, p, "shape"), ptr(p, "shape"));
    if (read_dtype(info, p) != "float32") throw GraphSchemaError(ptr(p, "dtype"), "weights must be float32");
    std::string bytes;
    try {
      bytes = base64_decode(read_string(field(info, p, "data"), ptr(p, "data")));
    } catch (const std::invalid_argument& e) {
      throw GraphSchemaError(ptr(p, "data"), e.what());
    }
    if (bytes.size() != element_count(w.shape) * sizeof(float)) {
      throw GraphSchemaError(ptr(p, "data"), "payload has " + std::to_string(bytes.size()) + " bytes, shape " +
                                                 shape_to_string(w.shape) + " needs " +
                                                 std::to_string(element_count(w.shape) * sizeof(float)));
    }
    w.data.resize(element_count(w.shape));
    std::memcpy(w.data.data(), bytes.data(), bytes.size());
    g.weights.emplace(name, std::move(w));
  }

  const json& nodes = field(root, "", "nodes");
  if (!nodes.is_array()) throw GraphSchemaError("/nodes", "expected an array");
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const std::string p = ptr("/nodes", i);
    const json& jn = nodes[i];
    Node n;
    n.id = read_string(field(jn, p, "id"), ptr(p, "id"));
    const std::string op = read_string(field(jn, p, "op"), ptr(p, "op"));
    const auto kind = parse_op_kind(op);
    if (!kind) throw GraphSchemaError(ptr(p, "op"), "node '" + n.id + "': unknown op kind '" + op + "'");
    n.op = *kind;
    n.inputs = read_string_list(field(jn, p, "inputs"), ptr(p, "inputs"));
    n.outputs = read_string_list(field(jn, p, "outputs"), ptr(p, "outputs"));
    if (auto a = jn.find("attrs"); a != jn.end()) {
      if (!a->is_object()) throw GraphSchemaError(ptr(p, "attrs"), "expected an object");
      for (const auto& [key, value] : a->items()) n.attrs.emplace(key, read_attr(value, ptr(ptr(p, "attrs"), key), n.id));
    }
    coerce_attrs(n);
    try {
      check_node_schema(n);
    } catch (const GraphError& e) {
      throw GraphSchemaError(p, e.what());
    }
    g.nodes.push_back(std::move(n));
  }

  validate(g);
  canonicalize(g);
  return g;
}

std::string graph_to_json_text(const Graph& graph) {
  Graph g = graph;
  canonicalize(g);
  json root;
  root["format"] = "diffsolve-graph";
  root["version"] = 1;
  root["name"] = g.name;
  root["inputs"] = g.inputs;
  root["outputs"] = g.outputs;
  root["tensors"] = json::object();
  for (const auto& [name, info] : g.tensors) root["tensors"][name] = {{"shape", info.shape}, {"dtype", info.dtype}};
  root["weights"] = json::object();
  for (const auto& [name, w] : g.weights) {
    root["weights"][name] = {{"shape", w.shape},
                             {"dtype", "float32"},
                             {"data", base64_encode(w.data.data(), w.data.size() * sizeof(float))}};
  }
  root["nodes"] = json::array();
  for (const Node& n : g.nodes) {
    json jn{{"id", n.id}, {"op", std::string(to_string(n.op))}, {"inputs", n.inputs}, {"outputs", n.outputs}};
    jn["attrs"] = json::object();
    for (const auto& [key, value] : n.attrs) jn["attrs"][key] = attr_to_json(value);
    root["nodes"].push_back(std::move(jn));
  }
  return root.dump(1) + "\n";
}

Graph load_graph(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::ios_base::failure("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return graph_from_json_text(ss.str());
}

void save_graph(const Graph& g, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::ios_base::failure("cannot write " + path.string());
  out << graph_to_json_text(g);
  if (!out) throw std::ios_base::failure("write failed for " + path.string());
}

}  // namespace diffsolve::graph
