#include "diffsolve/interpreter.hpp"

#include <cmath>
#include <numbers>

#include "diffsolve/simd.hpp"

namespace diffsolve::graph {

namespace {

[[noreturn]] void fail(const Node& n, const std::string& what) {
  throw InterpretError("node '" + n.id + "' (" + std::string(to_string(n.op)) + "): " + what);
}

Tensor matmul(const Node& n, const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0]) {
    fail(n, "cannot multiply " + shape_to_string(a.shape()) + " by " + shape_to_string(b.shape()));
  }
  const std::size_t m = a.shape()[0], k = a.shape()[1], cols = b.shape()[1];
  Tensor out({m, cols});
  const auto& kern = simd::kernels();
  for (std::size_t i = 0; i < m; ++i) {
    std::span<double> row = out.values().subspan(i * cols, cols);
    for (std::size_t p = 0; p < k; ++p) kern.axpy(a[i * k + p], b.values().subspan(p * cols, cols), row);
  }
  return out;
}

Shape broadcast_shape(const Node& n, const Shape& a, const Shape& b) {
  const std::size_t rank = std::max(a.size(), b.size());
  Shape out(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    const std::size_t da = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
    const std::size_t db = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
    if (da != db && da != 1 && db != 1) {
      fail(n, "cannot broadcast " + shape_to_string(a) + " with " + shape_to_string(b));
    }
    out[i] = std::max(da, db);
  }
  return out;
}

// Strides of `s` aligned to `out`, 0 along broadcast axes.
std::vector<std::size_t> broadcast_strides(const Shape& s, const Shape& out) {
  std::vector<std::size_t> strides(out.size(), 0);
  std::size_t stride = 1;
  for (std::size_t i = s.size(); i-- > 0;) {
    const std::size_t axis = i + (out.size() - s.size());
    strides[axis] = s[i] == 1 ? 0 : stride;
    stride *= s[i];
  }
  return strides;
}

template <class Op>
Tensor elementwise(const Node& n, const Tensor& a, const Tensor& b, Op op,
                   void (*fast)(simd::CSpan, simd::CSpan, simd::MSpan)) {
  if (a.shape() == b.shape()) {
    Tensor out(a.shape());
    fast(a.values(), b.values(), out.values());
    return out;
  }
  const Shape shape = broadcast_shape(n, a.shape(), b.shape());
  Tensor out(shape);
  const auto sa = broadcast_strides(a.shape(), shape);
  const auto sb = broadcast_strides(b.shape(), shape);
  std::vector<std::size_t> index(shape.size(), 0);
  for (std::size_t flat = 0; flat < out.size(); ++flat) {
    std::size_t ia = 0, ib = 0;
    for (std::size_t d = 0; d < shape.size(); ++d) {
      ia += index[d] * sa[d];
      ib += index[d] * sb[d];
    }
    out[flat] = op(a[ia], b[ib]);
    for (std::size_t d = shape.size(); d-- > 0;) {
      if (++index[d] < shape[d]) break;
      index[d] = 0;
    }
  }
  return out;
}

Tensor layer_norm(const Node& n, const Tensor& x, const Tensor& scale, const Tensor& bias) {
  if (x.rank() == 0) fail(n, "input must have rank >= 1");
  const std::size_t width = x.shape().back();
  if (scale.size() != width || bias.size() != width) {
    fail(n, "scale/bias must have " + std::to_string(width) + " elements");
  }
  const double eps = attr_real(n, "epsilon");
  Tensor out(x.shape());
  for (std::size_t row = 0; row < x.size() / width; ++row) {
    const double* in = x.data() + row * width;
    double mean = 0.0;
    for (std::size_t i = 0; i < width; ++i) mean += in[i];
    mean /= static_cast<double>(width);
    double var = 0.0;
    for (std::size_t i = 0; i < width; ++i) var += (in[i] - mean) * (in[i] - mean);
    var /= static_cast<double>(width);
    const double inv = 1.0 / std::sqrt(var + eps);
    for (std::size_t i = 0; i < width; ++i) out[row * width + i] = (in[i] - mean) * inv * scale[i] + bias[i];
  }
  return out;
}

Tensor gelu(const Node& n, const Tensor& x) {
  Tensor out(x.shape());
  if (attr_string(n, "approximate") == "tanh") {
    const double c = std::sqrt(2.0 / std::numbers::pi);
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double v = x[i];
      out[i] = 0.5 * v * (1.0 + std::tanh(c * (v + 0.044715 * v * v * v)));
    }
  } else {
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = 0.5 * x[i] * (1.0 + std::erf(x[i] / std::numbers::sqrt2));
  }
  return out;
}

std::size_t resolve_axis(const Node& n, std::int64_t axis, std::size_t rank) {
  const auto r = static_cast<std::int64_t>(rank);
  if (axis < -r || axis >= r) fail(n, "axis " + std::to_string(axis) + " out of range for rank " + std::to_string(rank));
  return static_cast<std::size_t>(axis < 0 ? axis + r : axis);
}

Tensor concat(const Node& n, const std::vector<const Tensor*>& parts) {
  const Shape& first = parts.front()->shape();
  const std::size_t axis = resolve_axis(n, attr_int(n, "axis"), first.size());
  Shape shape = first;
  shape[axis] = 0;
  for (const Tensor* p : parts) {
    if (p->rank() != first.size()) fail(n, "rank mismatch");
    for (std::size_t d = 0; d < first.size(); ++d)
      if (d != axis && p->shape()[d] != first[d]) fail(n, "dimension mismatch off the concat axis");
    shape[axis] += p->shape()[axis];
  }
  Tensor out(shape);
  std::size_t outer = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= first[d];
  std::size_t inner = 1;
  for (std::size_t d = axis + 1; d < first.size(); ++d) inner *= first[d];
  std::size_t pos = 0;
  for (std::size_t o = 0; o < outer; ++o) {
    for (const Tensor* p : parts) {
      const std::size_t chunk = p->shape()[axis] * inner;
      std::copy_n(p->data() + o * chunk, chunk, out.data() + pos);
      pos += chunk;
    }
  }
  return out;
}

Tensor slice(const Node& n, const Tensor& x) {
  const std::size_t axis = resolve_axis(n, attr_int(n, "axis"), x.rank());
  const auto dim = static_cast<std::int64_t>(x.shape()[axis]);
  auto clamp = [&](std::int64_t v) { return std::clamp(v < 0 ? v + dim : v, std::int64_t{0}, dim); };
  const std::int64_t start = clamp(attr_int(n, "start"));
  const std::int64_t end = std::max(start, clamp(attr_int(n, "end")));
  Shape shape = x.shape();
  shape[axis] = static_cast<std::size_t>(end - start);
  Tensor out(shape);
  std::size_t outer = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= x.shape()[d];
  std::size_t inner = 1;
  for (std::size_t d = axis + 1; d < x.rank(); ++d) inner *= x.shape()[d];
  const std::size_t chunk = shape[axis] * inner;
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(x.data() + (o * x.shape()[axis] + static_cast<std::size_t>(start)) * inner, chunk,
                out.data() + o * chunk);
  }
  return out;
}

Tensor reshape(const Node& n, const Tensor& x) {
  const IntList& spec = attr_ints(n, "shape");
  Shape shape;
  std::size_t known = 1;
  int inferred = -1;
  for (std::size_t i = 0; i < spec.size(); ++i) {
    if (spec[i] == -1) {
      if (inferred >= 0) fail(n, "more than one -1 in target shape");
      inferred = static_cast<int>(i);
      shape.push_back(1);
    } else if (spec[i] < 0) {
      fail(n, "negative dimension in target shape");
    } else {
      shape.push_back(static_cast<std::size_t>(spec[i]));
      known *= static_cast<std::size_t>(spec[i]);
    }
  }
  if (inferred >= 0) {
    if (known == 0 || x.size() % known != 0) fail(n, "cannot infer -1 dimension");
    shape[static_cast<std::size_t>(inferred)] = x.size() / known;
  }
  if (element_count(shape) != x.size()) {
    fail(n, "cannot reshape " + shape_to_string(x.shape()) + " to " + shape_to_string(shape));
  }
  return Tensor(shape, std::vector<double>(x.values().begin(), x.values().end()));
}

Tensor constant(const Node& n) {
  Shape shape;
  for (auto d : attr_ints(n, "shape")) shape.push_back(static_cast<std::size_t>(d));
  const RealList& v = attr_reals(n, "value");
  return Tensor(shape, std::vector<double>(v.begin(), v.end()));
}

}  // namespace

Interpreter::Interpreter(Graph g) : graph_(std::move(g)) {
  validate(graph_);
  order_ = canonical_order(graph_);
  for (const auto& [name, w] : graph_.weights) {
    weights_.emplace(name, Tensor(w.shape, std::vector<double>(w.data.begin(), w.data.end())));
  }
}

TensorMap Interpreter::run(const TensorMap& feeds, bool capture_all) const {
  std::map<std::string, Tensor> env;
  for (const std::string& in : graph_.inputs) {
    auto it = feeds.find(in);
    if (it == feeds.end()) throw InterpretError("graph '" + graph_.name + "': missing feed for input '" + in + "'");
    if (auto info = graph_.tensors.find(in); info != graph_.tensors.end() && info->second.shape != it->second.shape()) {
      throw InterpretError("graph '" + graph_.name + "': input '" + in + "' expects shape " +
                           shape_to_string(info->second.shape) + ", got " + shape_to_string(it->second.shape()));
    }
    env.emplace(in, it->second);
  }

  auto get = [&](const Node& n, const std::string& name) -> const Tensor& {
    if (auto it = env.find(name); it != env.end()) return it->second;
    if (auto it = weights_.find(name); it != weights_.end()) return it->second;
    fail(n, "input '" + name + "' not available");
  };

  for (std::size_t idx : order_) {
    const Node& n = graph_.nodes[idx];
    Tensor result;
    switch (n.op) {
      case OpKind::MatMul:
        result = matmul(n, get(n, n.inputs[0]), get(n, n.inputs[1]));
        break;
      case OpKind::Add:
        result = elementwise(n, get(n, n.inputs[0]), get(n, n.inputs[1]), std::plus<>(), simd::kernels().add);
        break;
      case OpKind::Mul:
        result = elementwise(n, get(n, n.inputs[0]), get(n, n.inputs[1]), std::multiplies<>(), simd::kernels().mul);
        break;
      case OpKind::LayerNorm:
        result = layer_norm(n, get(n, n.inputs[0]), get(n, n.inputs[1]), get(n, n.inputs[2]));
        break;
      case OpKind::Gelu:
        result = gelu(n, get(n, n.inputs[0]));
        break;
      case OpKind::Concat: {
        std::vector<const Tensor*> parts;
        for (const std::string& in : n.inputs) parts.push_back(&get(n, in));
        result = concat(n, parts);
        break;
      }
      case OpKind::Slice:
        result = slice(n, get(n, n.inputs[0]));
        break;
      case OpKind::Reshape:
        result = reshape(n, get(n, n.inputs[0]));
        break;
      case OpKind::Constant:
        result = constant(n);
        break;
    }
    const std::string& out = n.outputs[0];
    if (auto info = graph_.tensors.find(out); info != graph_.tensors.end() && info->second.shape != result.shape()) {
      fail(n, "output '" + out + "' has shape " + shape_to_string(result.shape()) + ", declared " +
                  shape_to_string(info->second.shape));
    }
    env.insert_or_assign(out, std::move(result));
  }

  if (capture_all) return env;
  TensorMap outputs;
  for (const std::string& out : graph_.outputs) outputs.emplace(out, env.at(out));
  return outputs;
}

TensorMap interpret(const Graph& g, const TensorMap& feeds, bool capture_all) {
  return Interpreter(g).run(feeds, capture_all);
}

}  // namespace diffsolve::graph
