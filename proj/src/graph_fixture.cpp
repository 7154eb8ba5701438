#include "diffsolve/graph_fixture.hpp"

#include <cmath>
#include <stdexcept>

#include "diffsolve/rng.hpp"
#include "diffsolve/solvers.hpp"

namespace diffsolve::graph {

namespace {

class Builder {
 public:
  Builder(Graph& g, Rng& rng) : g_(g), rng_(rng) {}

  std::string weight(const std::string& name, Shape shape, double scale, double offset = 0.0) {
    Weight w{std::move(shape), {}};
    w.data.resize(element_count(w.shape));
    for (float& v : w.data) v = static_cast<float>(offset + scale * rng_.normal());
    g_.weights.emplace(name, std::move(w));
    return name;
  }

  std::string scalar_weight(const std::string& name, double value) {
    g_.weights.emplace(name, Weight{{1}, {static_cast<float>(value)}});
    return name;
  }

  std::string node(const std::string& id, OpKind op, std::vector<std::string> inputs, const std::string& out,
                   Shape out_shape, Attributes attrs = {}) {
    g_.nodes.push_back({id, op, std::move(inputs), {out}, std::move(attrs)});
    g_.tensors[out] = {std::move(out_shape), "float32"};
    return out;
  }

 private:
  Graph& g_;
  Rng& rng_;
};

}  // namespace

Graph generate_unrolled_fixture(std::uint64_t seed, std::size_t n_copies, std::size_t encoder_size,
                                std::size_t core_size, const FixtureOptions& opt) {
  if (n_copies < 2) throw std::invalid_argument("generate_unrolled_fixture: n_copies must be >= 2");
  if (core_size < kMinCoreSize) {
    throw std::invalid_argument("generate_unrolled_fixture: core_size must be >= " + std::to_string(kMinCoreSize));
  }
  const std::size_t n_steps = n_copies - 1;
  const std::size_t d = opt.trajectory_dim();
  const std::size_t h = opt.hidden_dim;

  Graph g;
  g.name = "unrolled";
  g.inputs = {"scene", "x_init"};
  g.outputs = {"trajectory", "turn_logits"};
  g.tensors["scene"] = {{1, opt.scene_dim}, "float32"};
  g.tensors["x_init"] = {{1, d}, "float32"};

  Rng rng(seed);
  Builder b(g, rng);
  auto attrs_gelu = Attributes{{"approximate", std::string("none")}};

  // Encoder: (MatMul, Add, Gelu)* then LayerNorm.
  std::string ctx = "scene";
  std::size_t e = opt.scene_dim;
  if (encoder_size > 0) {
    std::string cur = "scene";
    std::size_t width = opt.scene_dim;
    for (std::size_t k = 0; k + 1 < encoder_size; ++k) {
      const std::string id = "enc/" + std::to_string(k);
      switch (k % 3) {
        case 0: {
          const std::string w = b.weight(id + ".w", {width, opt.embed_dim}, 1.0 / std::sqrt(double(width)));
          cur = b.node(id, OpKind::MatMul, {cur, w}, id + ":out", {1, opt.embed_dim});
          width = opt.embed_dim;
          break;
        }
        case 1: {
          const std::string bias = b.weight(id + ".b", {width}, 0.1);
          cur = b.node(id, OpKind::Add, {cur, bias}, id + ":out", {1, width});
          break;
        }
        default:
          cur = b.node(id, OpKind::Gelu, {cur}, id + ":out", {1, width}, attrs_gelu);
      }
    }
    const std::string id = "enc/" + std::to_string(encoder_size - 1);
    const std::string scale = b.weight(id + ".scale", {width}, 0.1, 1.0);
    const std::string shift = b.weight(id + ".shift", {width}, 0.1);
    ctx = b.node(id, OpKind::LayerNorm, {cur, scale, shift}, "context_embedding", {1, width},
                 {{"epsilon", 1e-5}});
    e = width;
  }

  // Shared core weights.
  const std::string w_t = b.weight("core.w_t", {1, h}, 1.0);
  const std::string w_x = b.weight("core.w_x", {d, h}, 1.0 / std::sqrt(double(d)));
  const std::string w_c = b.weight("core.w_c", {e, h}, 1.0 / std::sqrt(double(e)));
  std::vector<std::string> hidden_weights;
  const std::size_t extra = core_size - kMinCoreSize;
  for (std::size_t k = 0; k < extra; ++k) {
    if (k % 3 == 0) hidden_weights.push_back(b.weight("core.w_h" + std::to_string(k), {h, h}, 1.0 / std::sqrt(double(h))));
    if (k % 3 == 1) hidden_weights.push_back(b.weight("core.b_h" + std::to_string(k), {h}, 0.1));
    if (k % 3 == 2) hidden_weights.push_back("");
  }
  const std::string w_o = b.weight("core.w_o", {h, d}, 0.5 / std::sqrt(double(h)));

  const TimestepGrid grid = make_grid(opt.schedule, n_steps, opt.t_start, opt.t_end);

  std::string x = "x_init";
  std::string last_out;
  for (std::size_t i = 0; i < n_copies; ++i) {
    const std::string p = "dit" + std::to_string(i) + "/";
    const auto t32 = static_cast<double>(static_cast<float>(grid.t(i)));
    const std::string t = b.node(p + "t", OpKind::Constant, {}, p + "t:out", {1, 1},
                                 {{"shape", IntList{1, 1}}, {"value", RealList{t32}}});
    const std::string temb = b.node(p + "temb", OpKind::MatMul, {t, w_t}, p + "temb:out", {1, h});
    const std::string xp = b.node(p + "xproj", OpKind::MatMul, {x, w_x}, p + "xproj:out", {1, h});
    const std::string cp = b.node(p + "cproj", OpKind::MatMul, {ctx, w_c}, p + "cproj:out", {1, h});
    const std::string s0 = b.node(p + "sum0", OpKind::Add, {xp, cp}, p + "sum0:out", {1, h});
    const std::string s1 = b.node(p + "sum1", OpKind::Add, {s0, temb}, p + "sum1:out", {1, h});
    std::string cur = b.node(p + "act0", OpKind::Gelu, {s1}, p + "act0:out", {1, h}, attrs_gelu);
    for (std::size_t k = 0; k < extra; ++k) {
      const std::string id = p + "hid" + std::to_string(k);
      if (k % 3 == 0) cur = b.node(id, OpKind::MatMul, {cur, hidden_weights[k]}, id + ":out", {1, h});
      if (k % 3 == 1) cur = b.node(id, OpKind::Add, {cur, hidden_weights[k]}, id + ":out", {1, h});
      if (k % 3 == 2) cur = b.node(id, OpKind::Gelu, {cur}, id + ":out", {1, h}, attrs_gelu);
    }
    const bool last = (i + 1 == n_copies);
    const std::string x0 = b.node(p + "out", OpKind::MatMul, {cur, w_o}, last ? "trajectory" : p + "x0", {1, d});
    if (last) {
      last_out = x0;
      break;
    }

    // x_{i+1} = (sigma_t / sigma_s) x_i + alpha_t (1 - e^-h) x0_i, coefficients frozen at export.
    const StepCoefficients k = step_coefficients(opt.schedule, grid.t(i), grid.t(i + 1));
    const std::string s = "solver" + std::to_string(i) + "/";
    const std::string a = b.scalar_weight("solver.a" + std::to_string(i), k.sigma_ratio);
    const std::string c = b.scalar_weight("solver.b" + std::to_string(i), k.data_weight);
    const std::string mx = b.node(s + "mx", OpKind::Mul, {x, a}, s + "mx:out", {1, d});
    const std::string md = b.node(s + "md", OpKind::Mul, {x0, c}, s + "md:out", {1, d});
    x = b.node(s + "add", OpKind::Add, {mx, md}, "x" + std::to_string(i + 1), {1, d});
  }

  // Head.
  std::vector<std::string> head_in{last_out};
  std::size_t head_width = d;
  if (opt.head_uses_context) {
    head_in.push_back(ctx);
    head_width += e;
  }
  const std::string cat = b.node("head/concat", OpKind::Concat, head_in, "head/concat:out", {1, head_width},
                                 {{"axis", std::int64_t{1}}});
  const std::string hw = b.weight("head.w", {head_width, 4}, 1.0 / std::sqrt(double(head_width)));
  const std::string hb = b.weight("head.b", {4}, 0.1);
  const std::string mm = b.node("head/matmul", OpKind::MatMul, {cat, hw}, "head/matmul:out", {1, 4});
  b.node("head/add", OpKind::Add, {mm, hb}, "turn_logits", {1, 4});

  validate(g);
  canonicalize(g);
  return g;
}

}  // namespace diffsolve::graph
