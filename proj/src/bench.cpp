#include "diffsolve/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

namespace diffsolve {

namespace {

struct Moments {
  double mean = 0.0;
  double std = 0.0;
};

Moments moments(const std::vector<double>& v) {
  Moments m;
  if (v.empty()) return m;
  for (double x : v) m.mean += x;
  m.mean /= static_cast<double>(v.size());
  for (double x : v) m.std += (x - m.mean) * (x - m.mean);
  m.std = std::sqrt(m.std / static_cast<double>(v.size()));
  return m;
}

PlannerConfig with_solver(PlannerConfig cfg, SolverKind kind, std::size_t n) {
  cfg.n_steps = n;
  cfg.solver = kind == SolverKind::Ddim ? "ddim" : "dpmpp";
  cfg.order = solver_order(kind);
  cfg.validate();
  return cfg;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

double relative_error(const Tensor& a, const Tensor& ref) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - ref[i]) * (a[i] - ref[i]);
    den += ref[i] * ref[i];
  }
  return den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
}

}  // namespace

void LatencyModel::validate() const {
  for (double v : {t_enc, t_dit, t_sol}) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw std::invalid_argument("latency terms must be finite and >= 0");
  }
}

double latency_mono(const LatencyModel& m, std::size_t n) {
  m.validate();
  if (n < 1) throw std::invalid_argument("latency_mono: n must be >= 1");
  const double calls = static_cast<double>(n + 1);
  return calls * m.t_enc + calls * m.t_dit + static_cast<double>(n) * m.t_sol;
}

double latency_mod(const LatencyModel& m, std::size_t n) {
  m.validate();
  if (n < 1) throw std::invalid_argument("latency_mod: n must be >= 1");
  return m.t_enc + static_cast<double>(n + 1) * m.t_dit + static_cast<double>(n) * m.t_sol;
}

DisplacementErrors displacement_errors(const Tensor& pred, const Tensor& ref, std::size_t agent) {
  require_same_shape(pred, ref, "displacement_errors");
  if (pred.rank() != 3 || pred.shape()[2] < 2) {
    throw std::invalid_argument("displacement_errors: expected A x T x C with C >= 2, got " +
                                shape_to_string(pred.shape()));
  }
  const std::size_t horizon = pred.shape()[1];
  if (agent >= pred.shape()[0]) throw std::out_of_range("displacement_errors: agent out of range");
  auto dist = [&](std::size_t t) {
    return std::hypot(pred.at({agent, t, 0}) - ref.at({agent, t, 0}), pred.at({agent, t, 1}) - ref.at({agent, t, 1}));
  };
  DisplacementErrors e;
  e.fde_m = dist(horizon - 1);
  if (horizon == 1) {
    e.ade_m = e.fde_m;
    return e;
  }
  double sum = 0.0;
  for (std::size_t t = 1; t < horizon; ++t) sum += dist(t);
  e.ade_m = sum / static_cast<double>(horizon - 1);
  return e;
}

std::vector<BenchScene> make_scenes(std::uint64_t seed, std::size_t count, const Shape& trajectory,
                                    const SceneLayout& layout) {
  const PlannerModels shared = gaussian_models(seed, trajectory);
  std::vector<BenchScene> scenes;
  scenes.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint64_t s = seed * 1000003ULL + i;
    BenchScene scene{s, random_scene(s, layout), shared};
    scene.models.denoiser = std::make_shared<GaussianDenoiser>(GaussianDenoiser::from_seed(s, trajectory));
    scenes.push_back(std::move(scene));
  }
  return scenes;
}

const SweepRow* SweepResult::find(SolverKind kind, std::size_t n_steps) const {
  for (const SweepRow& r : rows)
    if (r.kind == kind && r.n_steps == n_steps) return &r;
  return nullptr;
}

std::string SweepResult::to_csv() const {
  std::string out =
      "schema,solver,order,n_steps,reference,scenes,fde_m,fde_std_m,ade_m,ade_std_m,latency_mono_model_ms,"
      "latency_mod_model_ms,encoder_calls,core_calls,status\n";
  for (const SweepRow& r : rows) {
    out += "v1," + std::string(to_string(r.kind)) + "," + std::to_string(r.order()) + "," + std::to_string(r.n_steps) +
           "," + (r.reference ? "1" : "0") + "," + std::to_string(r.scenes) + "," + fmt(r.fde_m) + "," +
           fmt(r.fde_std_m) + "," + fmt(r.ade_m) + "," + fmt(r.ade_std_m) + "," + fmt(r.latency_mono_model_ms) + "," +
           fmt(r.latency_mod_model_ms) + "," + std::to_string(r.encoder_calls) + "," + std::to_string(r.core_calls) +
           "," + (r.failed ? "failed" : "ok") + "\n";
  }
  return out;
}

std::string SweepResult::timing_csv() const {
  std::string out = "schema,solver,order,n_steps,scenes,latency_measured_ms,latency_measured_std_ms\n";
  for (const SweepRow& r : rows) {
    out += "v1," + std::string(to_string(r.kind)) + "," + std::to_string(r.order()) + "," + std::to_string(r.n_steps) +
           "," + std::to_string(r.scenes) + "," + fmt(r.latency_measured_ms) + "," + fmt(r.latency_measured_std_ms) +
           "\n";
  }
  return out;
}

SweepResult run_sweep(const std::vector<BenchScene>& scenes, const SweepConfig& cfg) {
  if (scenes.empty()) throw std::invalid_argument("run_sweep: no scenes");
  const PlannerConfig ref_cfg = with_solver(cfg.base, cfg.reference_kind, cfg.reference_steps);
  std::vector<Tensor> refs;
  refs.reserve(scenes.size());
  for (const BenchScene& s : scenes) refs.push_back(Planner(s.models, ref_cfg).plan(s.context).trajectory);

  std::vector<std::pair<SolverKind, std::size_t>> configs;
  for (SolverKind k : cfg.kinds)
    for (std::size_t n : cfg.step_counts) configs.emplace_back(k, n);
  if (std::find(configs.begin(), configs.end(), std::pair{cfg.reference_kind, cfg.reference_steps}) == configs.end())
    configs.emplace_back(cfg.reference_kind, cfg.reference_steps);
  std::sort(configs.begin(), configs.end(), [](const auto& a, const auto& b) {
    const int oa = solver_order(a.first), ob = solver_order(b.first);
    if (a.first != b.first) return a.first < b.first;
    if (oa != ob) return oa < ob;
    return a.second < b.second;
  });

  SweepResult result;
  for (const auto& [kind, n] : configs) {
    SweepRow row;
    row.kind = kind;
    row.n_steps = n;
    row.reference = (kind == cfg.reference_kind && n == cfg.reference_steps);
    row.latency_mono_model_ms = latency_mono(cfg.latency, n);
    row.latency_mod_model_ms = latency_mod(cfg.latency, n);
    try {
      const PlannerConfig pc = with_solver(cfg.base, kind, n);
      std::vector<double> fde, ade, ms;
      for (std::size_t i = 0; i < scenes.size(); ++i) {
        Planner planner(scenes[i].models, pc);
        for (std::size_t w = 0; cfg.measure_latency && w < cfg.warmup; ++w) planner.plan(scenes[i].context);
        const auto t0 = std::chrono::steady_clock::now();
        const PlanResult r = planner.plan(scenes[i].context);
        ms.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
        const DisplacementErrors e = displacement_errors(r.trajectory, refs[i]);
        fde.push_back(e.fde_m);
        ade.push_back(e.ade_m);
        row.encoder_calls = r.stats.encoder_calls;
        row.core_calls = r.stats.core_calls;
      }
      row.scenes = scenes.size();
      const Moments f = moments(fde), a = moments(ade), t = moments(ms);
      row.fde_m = f.mean;
      row.fde_std_m = f.std;
      row.ade_m = a.mean;
      row.ade_std_m = a.std;
      if (cfg.measure_latency) {
        row.latency_measured_ms = t.mean;
        row.latency_measured_std_ms = t.std;
      }
    } catch (const std::exception& e) {
      row.failed = true;
      row.error = e.what();
    }
    result.rows.push_back(std::move(row));
  }
  return result;
}

double TruncationRow::fde_ratio() const {
  if (dedicated.fde_m == 0.0) return truncated.fde_m == 0.0 ? 1.0 : std::numeric_limits<double>::infinity();
  return truncated.fde_m / dedicated.fde_m;
}

TruncationRow truncation_study(const std::vector<BenchScene>& scenes, std::size_t n_full, std::size_t n_small,
                               const PlannerConfig& base) {
  if (scenes.empty()) throw std::invalid_argument("truncation_study: no scenes");
  if (n_small < 1 || n_small > n_full) throw std::invalid_argument("truncation_study: need 1 <= n_small <= n_full");
  PlannerConfig full_cfg = base;
  full_cfg.n_steps = n_full;
  full_cfg.validate();
  PlannerConfig small_cfg = base;
  small_cfg.n_steps = n_small;
  small_cfg.validate();
  const TimestepGrid full_grid = make_grid(base.schedule(), n_full, base.t_start, base.t_end);
  const TimestepGrid cut = full_grid.truncated(n_small);

  TruncationRow row;
  row.n_full = n_full;
  row.n_small = n_small;
  const double k = 1.0 / static_cast<double>(scenes.size());
  for (const BenchScene& s : scenes) {
    const PlanResult ref = Planner(s.models, full_cfg).plan(s.context);
    const PlanResult ded = Planner(s.models, small_cfg).plan(s.context);
    const PlanResult tr = Planner(s.models, full_cfg).plan_on_grid(s.context, cut);
    const DisplacementErrors ed = displacement_errors(ded.trajectory, ref.trajectory);
    const DisplacementErrors et = displacement_errors(tr.trajectory, ref.trajectory);
    row.dedicated.fde_m += k * ed.fde_m;
    row.dedicated.ade_m += k * ed.ade_m;
    row.truncated.fde_m += k * et.fde_m;
    row.truncated.ade_m += k * et.ade_m;
    row.dedicated_rel_err += k * relative_error(ded.normalized_trajectory, ref.normalized_trajectory);
    row.truncated_rel_err += k * relative_error(tr.normalized_trajectory, ref.normalized_trajectory);
  }
  return row;
}

std::vector<ParetoVerdict> pareto(const std::vector<ParetoPoint>& points, double budget_ms) {
  std::vector<ParetoVerdict> out;
  out.reserve(points.size());
  for (const ParetoPoint& p : points) {
    bool dominated = false;
    for (const ParetoPoint& q : points) {
      if (q.latency_ms <= p.latency_ms && q.error <= p.error && (q.latency_ms < p.latency_ms || q.error < p.error)) {
        dominated = true;
        break;
      }
    }
    out.push_back({p, !dominated, p.latency_ms < budget_ms});
  }
  std::sort(out.begin(), out.end(), [](const ParetoVerdict& a, const ParetoVerdict& b) {
    if (a.point.latency_ms != b.point.latency_ms) return a.point.latency_ms < b.point.latency_ms;
    if (a.point.error != b.point.error) return a.point.error < b.point.error;
    return a.point.label < b.point.label;
  });
  return out;
}

LinearFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("fit_line: need >= 2 paired samples");
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
  }
  const double mx = sx / n, my = sy / n;
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx == 0.0) throw std::invalid_argument("fit_line: x values are all equal");
  LinearFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  for (std::size_t i = 0; i < x.size(); ++i)
    f.max_abs_residual = std::max(f.max_abs_residual, std::abs(y[i] - (f.intercept + f.slope * x[i])));
  return f;
}

}  // namespace diffsolve
