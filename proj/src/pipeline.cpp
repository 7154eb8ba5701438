#include "diffsolve/pipeline.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "diffsolve/rng.hpp"
#include "diffsolve/simd.hpp"
#include "json.hpp"

namespace diffsolve {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

std::size_t parse_count(std::string_view key, std::string_view v) {
  std::size_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) {
    throw std::invalid_argument(std::string(key) + ": expected an integer, got '" + std::string(v) + "'");
  }
  return out;
}

double parse_real(std::string_view key, std::string_view v) {
  const std::string s(v);
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size()) throw std::invalid_argument(std::string(key) + ": expected a number, got '" + s + "'");
  return out;
}

// Times the wrapped core and fetches the embedding through the cache before
// every call; with caching disabled that is a fresh encode each time.
class CycleDenoiser final : public DenoiserModel {
 public:
  CycleDenoiser(const DenoiserModel& inner, EncoderCache& cache, const SceneContext& ctx, CycleStats& stats)
      : inner_(inner), cache_(cache), ctx_(ctx), stats_(stats) {}

  void predict(const Tensor& x_t, const ContextEmbedding&, double t, Tensor& out) const override {
    auto t0 = Clock::now();
    last_ = cache_.cached_encode(ctx_).embedding;
    stats_.encode_ms += ms_since(t0);
    t0 = Clock::now();
    inner_.predict(x_t, last_, t, out);
    stats_.core_ms += ms_since(t0);
    ++stats_.core_calls;
  }
  std::uint64_t weights_fingerprint() const override { return inner_.weights_fingerprint(); }

  const ContextEmbedding& last_embedding() const { return last_; }

 private:
  const DenoiserModel& inner_;
  EncoderCache& cache_;
  const SceneContext& ctx_;
  CycleStats& stats_;
  mutable ContextEmbedding last_;
};

}  // namespace

// --- config -------------------------------------------------------------------

AnchorSpec AnchorSpec::ego_and_neighbors(std::size_t agents) {
  AnchorSpec s;
  s.slots.clear();
  for (std::size_t a = 0; a < agents; ++a) s.slots.push_back({a, 0});
  return s;
}

void PlannerConfig::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument(m); };
  if (n_steps < kMinSteps || n_steps > kMaxSteps) {
    fail("n_steps must be in [" + std::to_string(kMinSteps) + ", " + std::to_string(kMaxSteps) + "], got " +
         std::to_string(n_steps));
  }
  if (order != 1 && order != 2) fail("order must be in {1, 2}, got " + std::to_string(order));
  if (solver != "dpmpp" && solver != "ddim") fail("solver must be one of {dpmpp, ddim}, got '" + solver + "'");
  if (solver == "ddim" && order != 1) fail("solver ddim is first order; order must be 1");
  if (!(beta0 > 0.0) || !(beta1 > beta0) || !std::isfinite(beta1)) {
    fail("beta0, beta1 must satisfy 0 < beta0 < beta1, got " + std::to_string(beta0) + ", " + std::to_string(beta1));
  }
  if (!(temperature >= 0.0) || !std::isfinite(temperature)) {
    fail("temperature must be in [0, inf), got " + std::to_string(temperature));
  }
  if (!(t_start > 0.0 && t_start <= 1.0)) fail("t_start must be in (0, 1], got " + std::to_string(t_start));
  if (!(t_end > 0.0 && t_end < t_start)) fail("t_end must be in (0, t_start), got " + std::to_string(t_end));
  if (!(normalization.sigma > 0.0)) fail("normalization sigma must be > 0");
}

SolverKind PlannerConfig::kind() const {
  if (solver == "ddim") return SolverKind::Ddim;
  return order == 1 ? SolverKind::DpmPP1 : SolverKind::DpmPP2;
}

std::string PlannerConfig::to_json() const {
  nlohmann::json j;
  j["n_steps"] = n_steps;
  j["order"] = order;
  j["solver"] = solver;
  j["beta0"] = beta0;
  j["beta1"] = beta1;
  j["temperature"] = temperature;
  j["t_start"] = t_start;
  j["t_end"] = t_end;
  j["noise_seed"] = noise_seed;
  j["normalization"] = {{"sigma", normalization.sigma}, {"mean", normalization.mean}};
  nlohmann::json slots = nlohmann::json::array();
  for (const auto& s : anchor.slots) slots.push_back({s.agent, s.time});
  j["anchor"] = {{"slots", slots}, {"values", anchor.values}};
  j["monolithic_emulation"] = monolithic_emulation;
  return j.dump(1);
}

PlannerConfig PlannerConfig::from_json(const std::string& text) {
  const nlohmann::json j = nlohmann::json::parse(text);
  PlannerConfig c;
  c.n_steps = j.value("n_steps", c.n_steps);
  c.order = j.value("order", c.order);
  c.solver = j.value("solver", c.solver);
  c.beta0 = j.value("beta0", c.beta0);
  c.beta1 = j.value("beta1", c.beta1);
  c.temperature = j.value("temperature", c.temperature);
  c.t_start = j.value("t_start", c.t_start);
  c.t_end = j.value("t_end", c.t_end);
  c.noise_seed = j.value("noise_seed", c.noise_seed);
  c.monolithic_emulation = j.value("monolithic_emulation", c.monolithic_emulation);
  if (j.contains("normalization")) {
    const auto& n = j.at("normalization");
    c.normalization.sigma = n.value("sigma", c.normalization.sigma);
    if (n.contains("mean")) c.normalization.mean = n.at("mean").get<std::array<double, kStateDim>>();
  }
  if (j.contains("anchor")) {
    const auto& a = j.at("anchor");
    if (a.contains("slots")) {
      c.anchor.slots.clear();
      for (const auto& s : a.at("slots")) c.anchor.slots.push_back({s.at(0).get<std::size_t>(), s.at(1).get<std::size_t>()});
    }
    if (a.contains("values")) c.anchor.values = a.at("values").get<std::vector<double>>();
  }
  c.validate();
  return c;
}

PlannerConfig PlannerConfig::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::ios_base::failure("cannot open " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return from_json(ss.str());
}

PlannerConfig set_param(const PlannerConfig& cfg, std::string_view key, std::string_view value) {
  PlannerConfig c = cfg;
  if (key == "n_steps") {
    c.n_steps = parse_count(key, value);
  } else if (key == "order") {
    const std::size_t p = parse_count(key, value);
    c.order = p > 2 ? 3 : static_cast<int>(p);
  } else if (key == "solver") {
    if (value == "ddim") {
      c.solver = "ddim";
      c.order = 1;
    } else if (value == "dpmpp" || value == "dpm") {
      c.solver = "dpmpp";
    } else if (value == "dpm1" || value == "dpmpp1") {
      c.solver = "dpmpp";
      c.order = 1;
    } else if (value == "dpm2" || value == "dpmpp2") {
      c.solver = "dpmpp";
      c.order = 2;
    } else {
      throw std::invalid_argument("solver must be one of {ddim, dpmpp, dpm1, dpm2}, got '" + std::string(value) + "'");
    }
  } else if (key == "beta0") {
    c.beta0 = parse_real(key, value);
  } else if (key == "beta1") {
    c.beta1 = parse_real(key, value);
  } else if (key == "temperature") {
    c.temperature = parse_real(key, value);
  } else if (key == "t_end") {
    c.t_end = parse_real(key, value);
  } else {
    throw std::invalid_argument("unknown parameter '" + std::string(key) +
                                "'; expected one of n_steps, order, solver, beta0, beta1, temperature, t_end");
  }
  c.validate();
  return c;
}

// --- models and scenes --------------------------------------------------------

std::uint64_t PlannerModels::weights_fingerprint() const {
  Fnv1a h;
  h.update_value(encoder ? encoder->weights_fingerprint() : 0);
  h.update_value(denoiser ? denoiser->weights_fingerprint() : 0);
  h.update_value(head ? head->weights_fingerprint() : 0);
  return h.digest();
}

PlannerModels gaussian_models(std::uint64_t seed, const Shape& trajectory, double variance) {
  if (trajectory.size() != 3 || trajectory[2] != kStateDim) {
    throw std::invalid_argument("gaussian_models: trajectory must be A x T x 4, got " + shape_to_string(trajectory));
  }
  PlannerModels m;
  m.trajectory_shape = trajectory;
  m.encoder = std::make_shared<ProjectionEncoder>(seed + 1);
  m.denoiser = std::make_shared<GaussianDenoiser>(GaussianDenoiser::from_seed(seed, trajectory, variance));
  m.head = std::make_shared<LinearHead>(LinearHead::random(seed + 2, trajectory[1], kEmbeddingWidth));
  return m;
}

SceneContext random_scene(std::uint64_t seed, const SceneLayout& layout) {
  SceneContext ctx(layout);
  Rng rng(seed);
  for (std::size_t i = 0; i < SceneContext::kFieldCount; ++i)
    for (double& v : ctx.mutable_values(i)) v = rng.normal();
  return ctx;
}

// --- anchoring ----------------------------------------------------------------

void apply_anchor(const AnchorSpec& spec, std::span<const double> values, const Shape& shape, std::span<double> x) {
  if (shape.size() != 3) throw std::invalid_argument("apply_anchor: trajectory must be A x T x C");
  const std::size_t ch = shape[2];
  if (values.size() != spec.slots.size() * ch) {
    throw std::invalid_argument("apply_anchor: expected " + std::to_string(spec.slots.size() * ch) + " values, got " +
                                std::to_string(values.size()));
  }
  for (std::size_t k = 0; k < spec.slots.size(); ++k) {
    const auto& s = spec.slots[k];
    if (s.agent >= shape[0] || s.time >= shape[1]) {
      throw std::out_of_range("anchor slot (" + std::to_string(s.agent) + ", " + std::to_string(s.time) +
                              ") outside " + shape_to_string(shape));
    }
    const std::size_t off = (s.agent * shape[1] + s.time) * ch;
    for (std::size_t c = 0; c < ch; ++c) x[off + c] = values[k * ch + c];
  }
}

std::vector<double> resolve_anchor_values(const AnchorSpec& spec, const SceneContext& ctx) {
  if (!spec.values.empty()) return spec.values;
  std::vector<double> out;
  out.reserve(spec.slots.size() * kStateDim);
  for (const auto& s : spec.slots) {
    const Tensor& hist = s.agent == kEgoAgent ? ctx.ego_history() : ctx.neighbor_tracks();
    const Shape& sh = hist.shape();
    const std::size_t state = sh.back();
    const std::size_t steps = sh[sh.size() - 2];
    std::size_t row = steps - 1;
    if (s.agent != kEgoAgent) {
      if (s.agent - 1 >= sh[0]) {
        throw std::out_of_range("anchor agent " + std::to_string(s.agent) + " has no track in the scene");
      }
      row += (s.agent - 1) * steps;
    }
    for (std::size_t c = 0; c < kStateDim; ++c) out.push_back(c < state ? hist[row * state + c] : 0.0);
  }
  return out;
}

// --- planner --------------------------------------------------------------------

std::string CycleStats::to_json() const {
  nlohmann::json j;
  j["encoder_calls"] = encoder_calls;
  j["core_calls"] = core_calls;
  j["encode_ms"] = encode_ms;
  j["core_ms"] = core_ms;
  j["solver_ms"] = solver_ms;
  j["head_ms"] = head_ms;
  j["total_ms"] = total_ms;
  return j.dump();
}

PlanError::PlanError(std::string stage, std::optional<std::size_t> step, const std::string& what)
    : std::runtime_error(stage + (step ? " (step " + std::to_string(*step) + ")" : std::string()) + ": " + what),
      stage_(std::move(stage)),
      step_(step) {}

Planner::Planner(PlannerModels models, PlannerConfig config) : models_(std::move(models)), config_(std::move(config)) {
  if (!models_.encoder || !models_.denoiser || !models_.head) throw std::invalid_argument("Planner: missing model");
  config_.validate();
  cache_enabled_ = !config_.monolithic_emulation;
  cache_ = std::make_unique<EncoderCache>(models_.encoder, EncoderCache::Options{cache_enabled_, 1});
}

void Planner::set_param(std::string_view key, std::string_view value) {
  config_ = diffsolve::set_param(config_, key, value);
}

void Planner::set_config(PlannerConfig config) {
  config.validate();
  config_ = std::move(config);
}

PlanResult Planner::plan(const SceneContext& ctx) {
  std::optional<TimestepGrid> grid;
  try {
    config_.validate();
    grid = make_grid(config_.schedule(), config_.n_steps, config_.t_start, config_.t_end);
  } catch (const std::exception& e) {
    throw PlanError("config", std::nullopt, e.what());
  }
  return plan_on_grid(ctx, *grid);
}

PlanResult Planner::plan_on_grid(const SceneContext& ctx, const TimestepGrid& grid) {
  const auto t_cycle = Clock::now();
  PlanResult res;
  CycleStats& stats = res.stats;
  const PlannerConfig cfg = config_;

  if (cache_enabled_ == cfg.monolithic_emulation) {
    cache_enabled_ = !cfg.monolithic_emulation;
    cache_ = std::make_unique<EncoderCache>(models_.encoder, EncoderCache::Options{cache_enabled_, 1});
  }
  cache_->clear();
  const std::uint64_t calls_before = cache_->encoder_calls();

  const Shape& shape = models_.trajectory_shape;
  VpSchedule sched;
  std::vector<double> anchor;
  try {
    cfg.validate();
    sched = cfg.schedule();
    anchor = resolve_anchor_values(cfg.anchor, ctx);
    Tensor probe(shape);
    apply_anchor(cfg.anchor, anchor, shape, probe.values());
  } catch (const std::exception& e) {
    throw PlanError("config", std::nullopt, e.what());
  }

  // One encode per cycle; every core call below is served from the cache.
  CycleDenoiser core(*models_.denoiser, *cache_, ctx, stats);
  ContextEmbedding c;
  if (!cfg.monolithic_emulation) {
    try {
      const auto t0 = Clock::now();
      c = cache_->cached_encode(ctx).embedding;
      stats.encode_ms += ms_since(t0);
    } catch (const std::exception& e) {
      throw PlanError("encode", std::nullopt, e.what());
    }
  }

  Tensor x(shape);
  if (cfg.temperature > 0.0) {
    Rng rng(cfg.noise_seed);
    for (double& v : x.values()) v = cfg.temperature * rng.normal();
  }

  SolverHooks hooks;
  hooks.after_update = [&](std::size_t step, double, std::span<double> v) {
    apply_anchor(cfg.anchor, anchor, shape, v);
    if (!simd::kernels().all_finite(v)) throw SolverStepError(step, "non-finite trajectory");
  };
  const auto t_loop = Clock::now();
  const double encode_before = stats.encode_ms;
  SolveResult solved;
  try {
    solved = run_solver(cfg.kind(), sched, grid, core, c, x, hooks);
  } catch (const SolverStepError& e) {
    throw PlanError("solve", e.step(), e.what());
  }

  const double t_final = grid.t_end();
  Tensor x0(shape);
  try {
    core.predict(solved.x_final, c, t_final, x0);
  } catch (const std::exception& e) {
    throw PlanError("denoise_to_zero", grid.n_steps(), e.what());
  }
  apply_anchor(cfg.anchor, anchor, shape, x0.values());
  if (!all_finite(x0)) throw PlanError("denoise_to_zero", grid.n_steps(), "non-finite trajectory");
  stats.solver_ms = std::max(0.0, ms_since(t_loop) - stats.core_ms - (stats.encode_ms - encode_before));

  res.trace = std::move(solved.trace);
  res.trace.entries.push_back({grid.n_steps(), t_final, x0});

  const ContextEmbedding& c_head = cfg.monolithic_emulation ? core.last_embedding() : c;
  try {
    const auto t0 = Clock::now();
    res.logits = models_.head->logits(x0, c_head);
    res.turn = argmax_class(res.logits);
    stats.head_ms = ms_since(t0);
  } catch (const std::exception& e) {
    throw PlanError("head", std::nullopt, e.what());
  }

  res.trajectory = Tensor(shape);
  const std::size_t ch = shape[2];
  for (std::size_t i = 0; i < x0.size(); ++i) {
    const std::size_t k = i % ch;
    res.trajectory[i] = x0[i] * cfg.normalization.scale(k) + cfg.normalization.mean[k];
  }
  res.normalized_trajectory = std::move(x0);

  stats.encoder_calls = cache_->encoder_calls() - calls_before;
  stats.total_ms = ms_since(t_cycle);
  return res;
}

}  // namespace diffsolve
