#include "diffsolve/equivalence.hpp"

#include <algorithm>
#include <cmath>

#include "diffsolve/interpreter.hpp"
#include "diffsolve/rng.hpp"
#include "diffsolve/solvers.hpp"
#include "json.hpp"

namespace diffsolve::graph {

namespace {

double diff(const Tensor& a, const Tensor& b) {
  if (a.size() != b.size()) return std::numeric_limits<double>::infinity();
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = std::abs(a[i] - b[i]);
    if (std::isnan(d)) return std::numeric_limits<double>::infinity();
    m = std::max(m, d);
  }
  return m;
}

Tensor reshaped(const Tensor& src, const Graph& g, const std::string& name) {
  auto it = g.tensors.find(name);
  if (it == g.tensors.end() || element_count(it->second.shape) != src.size()) return src;
  Tensor out(it->second.shape);
  std::copy(src.values().begin(), src.values().end(), out.values().begin());
  return out;
}

int argmax(const Tensor& t) {
  return static_cast<int>(std::max_element(t.values().begin(), t.values().end()) - t.values().begin());
}

}  // namespace

double ErrorReport::max_module_error() const {
  double m = 0.0;
  for (const ModuleError& e : modules) m = std::max(m, e.max_abs_error);
  return m;
}

bool ErrorReport::modules_pass() const {
  return std::all_of(modules.begin(), modules.end(), [](const ModuleError& e) { return e.pass(); });
}

bool ErrorReport::pass() const {
  return problems.empty() && modules_pass() && end_to_end.pass() && physical_pass() && turn_classes_match;
}

std::string ErrorReport::to_json() const {
  nlohmann::json j;
  j["trials"] = trials;
  j["n_steps"] = n_steps;
  auto entry = [](const ModuleError& e) {
    return nlohmann::json{{"name", e.name}, {"max_abs_error", e.max_abs_error}, {"tolerance", e.tolerance},
                          {"pass", e.pass()}};
  };
  j["modules"] = nlohmann::json::array();
  for (const ModuleError& e : modules) j["modules"].push_back(entry(e));
  j["end_to_end"] = entry(end_to_end);
  j["physical_bound_m"] = physical_bound_m;
  j["physical_tolerance_m"] = physical_tolerance_m;
  j["turn_classes_match"] = turn_classes_match;
  j["problems"] = problems;
  j["pass"] = pass();
  return j.dump(1);
}

ErrorReport validate_equivalence(const Graph& mono, const Modules& modules, std::size_t n_steps, std::size_t trials,
                                 const EquivalenceOptions& opt) {
  const DecompositionReport& rep = modules.report;
  ErrorReport out;
  out.trials = trials;
  out.n_steps = n_steps;
  out.physical_tolerance_m = opt.physical_tolerance_m;
  out.end_to_end = {"end_to_end", 0.0, opt.end_to_end_tolerance};

  const std::size_t copies = rep.copies_found;
  out.modules.push_back({"encoder", 0.0, opt.module_tolerance});
  for (std::size_t i = 0; i < copies; ++i) out.modules.push_back({"core[" + std::to_string(i) + "]", 0.0, opt.module_tolerance});
  out.modules.push_back({"head", 0.0, opt.module_tolerance});
  if (n_steps + 1 != copies) {
    out.problems.push_back("n_steps " + std::to_string(n_steps) + " does not match " + std::to_string(copies) +
                           " unrolled copies");
    return out;
  }
  if (rep.copy_timesteps.size() != copies) {
    out.problems.push_back("core has no promoted timestep input");
    return out;
  }

  const Interpreter mono_i(mono), enc_i(modules.encoder), core_i(modules.core), head_i(modules.head);
  const TimestepGrid grid = make_grid(opt.schedule, n_steps, opt.t_start, opt.t_end);
  Rng rng(opt.seed);

  auto timestep = [&](double t) {
    Tensor tt(modules.core.tensors.count(rep.core_timestep_input) ? modules.core.tensors.at(rep.core_timestep_input).shape
                                                                  : Shape{1});
    tt.fill(t);
    return tt;
  };

  for (std::size_t trial = 0; trial < trials; ++trial) {
    TensorMap feeds;
    for (const std::string& name : mono.inputs) {
      Tensor t(mono.tensors.at(name).shape);
      for (double& v : t.values()) v = rng.normal();
      feeds.emplace(name, std::move(t));
    }
    const TensorMap env = mono_i.run(feeds, true);
    auto& errs = out.modules;

    TensorMap enc_feeds;
    for (const std::string& name : modules.encoder.inputs) enc_feeds.emplace(name, feeds.at(name));
    const TensorMap enc_out = enc_i.run(enc_feeds);
    for (const std::string& b : rep.boundary_tensors)
      errs.front().max_abs_error = std::max(errs.front().max_abs_error, diff(enc_out.at(b), env.at(b)));

    auto core_feeds = [&](const Tensor& x, double t, const TensorMap& boundary) {
      TensorMap f;
      f.emplace(rep.core_trajectory_input, reshaped(x, modules.core, rep.core_trajectory_input));
      f.emplace(rep.core_timestep_input, timestep(t));
      for (const std::string& b : rep.boundary_tensors) f.emplace(b, boundary.at(b));
      return f;
    };
    for (std::size_t i = 0; i < copies; ++i) {
      const TensorMap o = core_i.run(core_feeds(env.at(rep.copy_inputs[i]), rep.copy_timesteps[i], env));
      errs[1 + i].max_abs_error =
          std::max(errs[1 + i].max_abs_error, diff(o.at(rep.core_output), env.at(rep.copy_outputs[i])));
    }

    auto head_feeds = [&](const Tensor& x0, const TensorMap& boundary) {
      TensorMap f;
      for (const std::string& name : modules.head.inputs) {
        if (name == rep.core_output) {
          f.emplace(name, reshaped(x0, modules.head, name));
        } else if (boundary.count(name)) {
          f.emplace(name, boundary.at(name));
        } else {
          f.emplace(name, feeds.at(name));
        }
      }
      return f;
    };
    if (!modules.head.nodes.empty()) {
      const TensorMap o = head_i.run(head_feeds(env.at(rep.trajectory_output), env));
      for (const std::string& name : rep.head_outputs)
        errs.back().max_abs_error = std::max(errs.back().max_abs_error, diff(o.at(name), env.at(name)));
    }

    // Composition: the solver lives outside the graph, as in deployment.
    TensorMap boundary;
    for (const std::string& b : rep.boundary_tensors) boundary.emplace(b, enc_out.at(b));
    for (const std::string& name : mono.inputs)
      if (!boundary.count(name)) boundary.emplace(name, feeds.at(name));
    Tensor x = feeds.at(rep.trajectory_input);
    Tensor next(x.shape());
    for (std::size_t i = 0; i < n_steps; ++i) {
      const Tensor x0 = core_i.run(core_feeds(x, grid.t(i), boundary)).at(rep.core_output);
      first_order_update(step_coefficients(opt.schedule, grid.t(i), grid.t(i + 1)), x.values(), x0.values(),
                         next.values());
      std::swap(x, next);
    }
    const Tensor x0 = core_i.run(core_feeds(x, grid.t(n_steps), boundary)).at(rep.core_output);
    double e2e = diff(x0, env.at(rep.trajectory_output));
    if (!modules.head.nodes.empty()) {
      const TensorMap o = head_i.run(head_feeds(x0, boundary));
      for (const std::string& name : rep.head_outputs) {
        e2e = std::max(e2e, diff(o.at(name), env.at(name)));
        if (argmax(o.at(name)) != argmax(env.at(name))) out.turn_classes_match = false;
      }
    }
    out.end_to_end.max_abs_error = std::max(out.end_to_end.max_abs_error, e2e);
  }
  out.physical_bound_m = out.end_to_end.max_abs_error * opt.position_scale_m;
  return out;
}

}  // namespace diffsolve::graph
