// diffsolve: benchmark, planning and graph-splitting front end.
// Exit status: 0 success, 2 validation failure, 1 I/O or other error.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "diffsolve/bench.hpp"
#include "diffsolve/equivalence.hpp"
#include "diffsolve/graph_analysis.hpp"
#include "diffsolve/graph_fixture.hpp"
#include "diffsolve/graph_io.hpp"
#include "diffsolve/pipeline.hpp"
#include "diffsolve/simd.hpp"
#include "json.hpp"

using namespace diffsolve;
namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitIo = 1;
constexpr int kExitInvalid = 2;

class ValidationFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void write_file(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::ios_base::failure("cannot open " + path + " for writing");
  f << text;
  if (!f) throw std::ios_base::failure("write failed: " + path);
}

void emit(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
  } else {
    write_file(path, text);
  }
}

std::vector<SolverKind> parse_kinds(const std::vector<std::string>& names) {
  std::vector<SolverKind> out;
  for (const std::string& n : names) out.push_back(parse_solver_kind(n));
  return out;
}

PlannerConfig apply_sets(PlannerConfig cfg, const std::vector<std::string>& sets) {
  for (const std::string& kv : sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("--set expects key=value, got '" + kv + "'");
    cfg = set_param(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Diffusion planner solver toolkit"};
  app.require_subcommand(1);
  std::string simd_isa;
  app.add_option("--simd", simd_isa, "Kernel set: scalar, avx2, neon (default: best available)");

  // sweep
  auto* sweep = app.add_subcommand("sweep", "Solver x step-count sweep with FDE/ADE against the reference run");
  std::vector<std::size_t> steps{3, 5, 7, 10, 15, 20};
  std::vector<std::string> solvers{"ddim", "dpm1", "dpm2"};
  std::size_t scenes = 50;
  std::uint64_t seed = 0;
  std::string out_path, timing_path, pareto_path;
  double budget = kPlanningBudgetMs;
  bool no_timing = false;
  sweep->add_option("--steps", steps, "Step counts")->delimiter(',');
  sweep->add_option("--solvers", solvers, "ddim, dpm1, dpm2")->delimiter(',');
  sweep->add_option("--scenes", scenes, "Synthetic scenes")->check(CLI::PositiveNumber);
  sweep->add_option("--seed", seed, "Scene seed");
  sweep->add_option("--out", out_path, "Result CSV (default stdout)");
  sweep->add_option("--timing-out", timing_path, "Measured latency CSV");
  sweep->add_option("--pareto-out", pareto_path, "Pareto verdicts CSV over modeled latency");
  sweep->add_option("--budget", budget, "Planning budget in ms");
  sweep->add_flag("--no-timing", no_timing, "Skip wall-clock measurement");

  // latency
  auto* latency = app.add_subcommand("latency", "Modeled per-cycle latency");
  LatencyModel lm = kReferenceLatency;
  std::size_t n = 10;
  std::string mode = "both";
  latency->add_option("--t-enc", lm.t_enc, "Encoder ms");
  latency->add_option("--t-dit", lm.t_dit, "Core ms");
  latency->add_option("--t-sol", lm.t_sol, "Solver update ms");
  latency->add_option("--n", n, "Solver steps");
  latency->add_option("--mode", mode, "mono, mod or both")->check(CLI::IsMember({"mono", "mod", "both"}));

  // trace
  auto* trace = app.add_subcommand("trace", "Per-step x0 predictions of one plan as JSONL");
  std::vector<std::string> sets;
  trace->add_option("--n", n, "Solver steps");
  trace->add_option("--seed", seed, "Scene and model seed");
  trace->add_option("--set", sets, "Extra key=value planner parameters");
  trace->add_option("--out", out_path, "JSONL path (default stdout)");

  // plan
  auto* plan = app.add_subcommand("plan", "Run one planning cycle on a synthetic scene");
  std::string config_path;
  bool mono = false;
  plan->add_option("--config", config_path, "Planner config JSON");
  plan->add_option("--seed", seed, "Scene and model seed");
  plan->add_option("--set", sets, "key=value planner parameters");
  plan->add_flag("--monolithic", mono, "Re-run the encoder before every core call");

  // truncation
  auto* trunc = app.add_subcommand("truncation", "Dedicated small grid vs truncated full grid");
  std::size_t n_full = 10, n_small = 3;
  trunc->add_option("--full", n_full, "Full step count");
  trunc->add_option("--small", n_small, "Small step count");
  trunc->add_option("--scenes", scenes, "Synthetic scenes")->check(CLI::PositiveNumber);
  trunc->add_option("--seed", seed, "Scene seed");

  // graph
  auto* graph = app.add_subcommand("graph", "Monolithic graph tools");
  graph->require_subcommand(1);
  std::string in_path, out_dir;
  std::size_t copies = 11, enc_size = 40, core_size = 12, trials = 10;
  auto* gen = graph->add_subcommand("gen", "Generate an unrolled fixture graph");
  gen->add_option("--seed", seed, "Weight seed");
  gen->add_option("--copies", copies, "Core copies (steps + 1)")->check(CLI::Range(2, 1000));
  gen->add_option("--encoder", enc_size, "Encoder nodes");
  gen->add_option("--core", core_size, "Nodes per core copy");
  gen->add_option("--out", out_path, "Graph JSON path (default stdout)");
  auto* detect = graph->add_subcommand("detect", "Report repeated weight-sharing regions");
  detect->add_option("--in", in_path, "Graph JSON")->required();
  auto* split = graph->add_subcommand("split", "Extract encoder, core and head modules");
  split->add_option("--in", in_path, "Graph JSON")->required();
  split->add_option("--out-dir", out_dir, "Directory for encoder/core/head JSON and report")->required();
  auto* check = graph->add_subcommand("check", "Extract and validate numerical equivalence");
  check->add_option("--in", in_path, "Graph JSON")->required();
  check->add_option("--trials", trials, "Random input trials");
  check->add_option("--seed", seed, "Input seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInvalid;
  }

  try {
    if (!simd_isa.empty() && !simd::select(simd_isa))
      throw std::invalid_argument("kernel set '" + simd_isa + "' is not available on this machine");

    if (*sweep) {
      SweepConfig cfg;
      cfg.kinds = parse_kinds(solvers);
      cfg.step_counts = steps;
      cfg.measure_latency = !no_timing;
      const SweepResult res = run_sweep(make_scenes(seed, scenes), cfg);
      emit(out_path, res.to_csv());
      if (!timing_path.empty()) write_file(timing_path, res.timing_csv());
      if (!pareto_path.empty()) {
        std::vector<ParetoPoint> pts;
        for (const SweepRow& r : res.rows) {
          const std::string label = std::string(to_string(r.kind)) + "/N=" + std::to_string(r.n_steps);
          pts.push_back({"modular/" + label, r.latency_mod_model_ms, r.fde_m});
          pts.push_back({"monolithic/" + label, r.latency_mono_model_ms, r.fde_m});
        }
        std::string csv = "label,latency_ms,fde_m,on_frontier,within_budget\n";
        for (const ParetoVerdict& v : pareto(pts, budget)) {
          csv += v.point.label + "," + std::to_string(v.point.latency_ms) + "," + std::to_string(v.point.error) + "," +
                 (v.on_frontier ? "1" : "0") + "," + (v.within_budget ? "1" : "0") + "\n";
        }
        write_file(pareto_path, csv);
      }
      for (const SweepRow& r : res.rows)
        if (r.failed) std::cerr << "row " << to_string(r.kind) << " N=" << r.n_steps << " failed: " << r.error << "\n";
    } else if (*latency) {
      nlohmann::json j{{"n", n}, {"t_enc", lm.t_enc}, {"t_dit", lm.t_dit}, {"t_sol", lm.t_sol}};
      if (mode != "mod") j["latency_mono_ms"] = latency_mono(lm, n);
      if (mode != "mono") j["latency_mod_ms"] = latency_mod(lm, n);
      if (mode == "both") j["speedup"] = latency_mono(lm, n) / latency_mod(lm, n);
      std::cout << j.dump() << "\n";
    } else if (*trace) {
      PlannerConfig cfg;
      cfg.n_steps = n;
      cfg = apply_sets(cfg, sets);
      Planner planner(gaussian_models(seed), cfg);
      const PlanResult r = planner.plan(random_scene(seed));
      const TraceProbe probe{kEgoAgent, cfg.normalization.sigma, {cfg.normalization.mean[0], cfg.normalization.mean[1]}};
      if (out_path.empty() || out_path == "-") {
        write_trace_jsonl(std::cout, r.trace, probe);
      } else {
        export_trace(r.trace, out_path, probe);
      }
    } else if (*plan) {
      PlannerConfig cfg = config_path.empty() ? PlannerConfig{} : PlannerConfig::load(config_path);
      cfg = apply_sets(cfg, sets);
      if (mono) cfg.monolithic_emulation = true;
      Planner planner(gaussian_models(seed), cfg);
      const PlanResult r = planner.plan(random_scene(seed));
      const std::size_t last = r.trajectory.shape()[1] - 1;
      nlohmann::json j{{"turn", r.turn},
                       {"logits", r.logits},
                       {"ego_final", {r.trajectory.at({kEgoAgent, last, 0}), r.trajectory.at({kEgoAgent, last, 1})}},
                       {"stats", nlohmann::json::parse(r.stats.to_json())},
                       {"simd", simd::kernels().name}};
      std::cout << j.dump() << "\n";
    } else if (*trunc) {
      const TruncationRow row = truncation_study(make_scenes(seed, scenes), n_full, n_small);
      nlohmann::json j{{"n_full", row.n_full},
                       {"n_small", row.n_small},
                       {"dedicated", {{"fde_m", row.dedicated.fde_m}, {"ade_m", row.dedicated.ade_m}}},
                       {"truncated", {{"fde_m", row.truncated.fde_m}, {"ade_m", row.truncated.ade_m}}},
                       {"dedicated_rel_err", row.dedicated_rel_err},
                       {"truncated_rel_err", row.truncated_rel_err},
                       {"fde_ratio", row.fde_ratio()}};
      std::cout << j.dump() << "\n";
    } else if (*gen) {
      emit(out_path, graph::graph_to_json_text(graph::generate_unrolled_fixture(seed, copies, enc_size, core_size)));
    } else if (*detect) {
      const graph::RepeatDetection det = graph::detect_repeats(graph::load_graph(in_path));
      nlohmann::json regions = nlohmann::json::array();
      for (const auto& r : det.regions) regions.push_back({{"depth", r.depth}, {"nodes", r.nodes}});
      nlohmann::json j{{"seed_weight", det.seed_weight},
                       {"copies", det.regions.size()},
                       {"canonical_label", det.canonical_label},
                       {"diagnostics", det.diagnostics},
                       {"regions", regions}};
      std::cout << j.dump(1) << "\n";
    } else if (*split) {
      const graph::Modules m = graph::extract_modules(graph::load_graph(in_path));
      fs::create_directories(out_dir);
      graph::save_graph(m.encoder, fs::path(out_dir) / "encoder.json");
      graph::save_graph(m.core, fs::path(out_dir) / "core.json");
      graph::save_graph(m.head, fs::path(out_dir) / "head.json");
      write_file((fs::path(out_dir) / "report.json").string(), m.report.to_json() + "\n");
      std::cout << m.report.to_json() << "\n";
      if (m.report.accounted_nodes() != m.report.monolithic_node_count)
        throw ValidationFailure("node accounting does not sum to the monolithic count");
    } else if (*check) {
      const graph::Graph g = graph::load_graph(in_path);
      const graph::Modules m = graph::extract_modules(g);
      graph::EquivalenceOptions opt;
      opt.seed = seed;
      const graph::ErrorReport rep = graph::validate_equivalence(g, m, m.report.copies_found - 1, trials, opt);
      std::cout << rep.to_json() << "\n";
      if (!rep.pass()) throw ValidationFailure("equivalence check failed");
    }
  } catch (const std::ios_base::failure& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const ValidationFailure& e) {
    std::cerr << "validation failed: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const std::logic_error& e) {  // invalid_argument, out_of_range, domain_error
    std::cerr << "invalid: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const graph::GraphError& e) {
    std::cerr << "invalid graph: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const PlanError& e) {
    std::cerr << "plan failed: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  }
  return kExitOk;
}
