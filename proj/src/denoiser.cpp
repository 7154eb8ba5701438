#include "diffsolve/denoiser.hpp"

#include <bit>
#include <cmath>
#include <stdexcept>

#include "json.hpp"

#include "diffsolve/rng.hpp"

namespace diffsolve {

namespace {

std::string format_t(double t) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", t);
  return buf;
}

}  // namespace

DenoiserError::DenoiserError(double t, const std::string& what)
    : std::runtime_error("denoiser failed at t=" + format_t(t) + ": " + what), t_(t) {}

Tensor DenoiserModel::predict_x0(const Tensor& x_t, const ContextEmbedding& c, double t) const {
  if (!(t > 0.0 && t <= 1.0)) throw DenoiserError(t, "t outside (0, 1]");
  Tensor out(x_t.shape());
  try {
    predict(x_t, c, t, out);
  } catch (const DenoiserError&) {
    throw;
  } catch (const std::exception& e) {
    throw DenoiserError(t, e.what());
  }
  return out;
}

std::uint64_t fingerprint(const Tensor& t) {
  Fnv1a h;
  for (std::size_t d : t.shape()) h.update_value(static_cast<std::uint64_t>(d));
  for (double v : t.values()) h.update_value(std::bit_cast<std::uint64_t>(v));
  return h.digest();
}

// --- GaussianDenoiser -------------------------------------------------------

GaussianDenoiser::GaussianDenoiser(Tensor mean, Tensor variance, VpSchedule schedule)
    : mean_(std::move(mean)), variance_(std::move(variance)), schedule_(schedule) {
  require_same_shape(mean_, variance_, "GaussianDenoiser");
  for (double v : variance_.values()) {
    if (!(v > 0.0) || !std::isfinite(v)) throw std::invalid_argument("GaussianDenoiser: variance must be > 0");
  }
}

GaussianDenoiser::GaussianDenoiser(Tensor mean, double variance, VpSchedule schedule)
    : GaussianDenoiser(mean, Tensor(mean.shape(), variance), schedule) {}

GaussianDenoiser GaussianDenoiser::from_seed(std::uint64_t seed, const Shape& shape, double variance,
                                             double mean_scale, VpSchedule schedule) {
  Rng rng(seed);
  Tensor mean(shape);
  for (double& m : mean.values()) m = mean_scale * rng.normal();
  return GaussianDenoiser(std::move(mean), variance, schedule);
}

void GaussianDenoiser::predict(const Tensor& x_t, const ContextEmbedding&, double t, Tensor& out) const {
  require_same_shape(x_t, mean_, "GaussianDenoiser::predict");
  require_same_shape(out, mean_, "GaussianDenoiser::predict(out)");
  const double a = schedule_.alpha(t);
  const double s = schedule_.sigma(t);
  const double s2 = s * s;
  const std::size_t n = mean_.size();
  for (std::size_t i = 0; i < n; ++i) {
    const double mu = mean_[i];
    const double v = variance_[i];
    out[i] = mu + a * v * (x_t[i] - a * mu) / (a * a * v + s2);
  }
}

std::uint64_t GaussianDenoiser::weights_fingerprint() const {
  Fnv1a h;
  h.update_value(fingerprint(mean_));
  h.update_value(fingerprint(variance_));
  h.update_value(schedule_.beta0());
  h.update_value(schedule_.beta1());
  return h.digest();
}

Tensor GaussianDenoiser::exact_flow(const Tensor& x_s, double s, double t) const {
  require_same_shape(x_s, mean_, "GaussianDenoiser::exact_flow");
  const double as = schedule_.alpha(s), ss = schedule_.sigma(s);
  const double at = schedule_.alpha(t), st = schedule_.sigma(t);
  Tensor out(x_s.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = variance_[i];
    const double scale = std::sqrt((at * at * v + st * st) / (as * as * v + ss * ss));
    out[i] = at * mean_[i] + scale * (x_s[i] - as * mean_[i]);
  }
  return out;
}

GaussianDenoiser GaussianFixture::build() const {
  if (!mean.empty()) return GaussianDenoiser(Tensor(shape, mean), variance, schedule);
  return GaussianDenoiser::from_seed(seed, shape, variance, mean_scale, schedule);
}

std::string GaussianFixture::to_json() const {
  nlohmann::json j;
  j["seed"] = seed;
  j["shape"] = shape;
  j["variance"] = variance;
  j["mean_scale"] = mean_scale;
  j["beta0"] = schedule.beta0();
  j["beta1"] = schedule.beta1();
  if (!mean.empty()) j["mean"] = mean;
  return j.dump(2) + "\n";
}

GaussianFixture GaussianFixture::from_json(const std::string& text) {
  const nlohmann::json j = nlohmann::json::parse(text);
  GaussianFixture f;
  f.seed = j.at("seed").get<std::uint64_t>();
  f.shape = j.at("shape").get<Shape>();
  f.variance = j.value("variance", GaussianDenoiser::kDefaultVariance);
  f.mean_scale = j.value("mean_scale", 1.0);
  f.schedule = VpSchedule(j.value("beta0", 0.1), j.value("beta1", 20.0));
  if (j.contains("mean")) {
    f.mean = j.at("mean").get<std::vector<double>>();
    if (f.mean.size() != element_count(f.shape)) throw std::invalid_argument("GaussianFixture: mean/shape mismatch");
  }
  return f;
}

// --- ProjectionEncoder ------------------------------------------------------

ProjectionEncoder::ProjectionEncoder(std::uint64_t seed, std::size_t tokens, std::size_t width, std::size_t taps)
    : tokens_(tokens), width_(width), taps_(taps), weights_(width * taps), bias_(width) {
  if (tokens == 0 || width == 0 || taps == 0) throw std::invalid_argument("ProjectionEncoder: zero dimension");
  Rng rng(seed);
  const double scale = 1.0 / std::sqrt(static_cast<double>(taps));
  for (double& w : weights_) w = scale * rng.normal();
  for (double& b : bias_) b = 0.1 * rng.normal();
}

ContextEmbedding ProjectionEncoder::encode(const SceneContext& ctx) const {
  const std::vector<double> u = ctx.flatten();
  if (u.empty()) throw std::invalid_argument("ProjectionEncoder: empty scene context");
  Tensor out({tokens_, width_});
  const std::size_t n = u.size();
  std::vector<double> window(taps_);
  for (std::size_t l = 0; l < tokens_; ++l) {
    for (std::size_t k = 0; k < taps_; ++k) window[k] = u[(l * taps_ + k) % n];
    for (std::size_t j = 0; j < width_; ++j) {
      double acc = bias_[j];
      const double* w = &weights_[j * taps_];
      for (std::size_t k = 0; k < taps_; ++k) acc += w[k] * window[k];
      out[l * width_ + j] = std::tanh(acc);
    }
  }
  return {std::move(out)};
}

std::uint64_t ProjectionEncoder::weights_fingerprint() const {
  Fnv1a h;
  h.update_value(static_cast<std::uint64_t>(tokens_));
  for (double w : weights_) h.update_value(std::bit_cast<std::uint64_t>(w));
  for (double b : bias_) h.update_value(std::bit_cast<std::uint64_t>(b));
  return h.digest();
}

ContextEmbedding CountingEncoder::encode(const SceneContext& ctx) const {
  calls_.fetch_add(1, std::memory_order_relaxed);
  return inner_->encode(ctx);
}

// --- turn indicator ---------------------------------------------------------

LinearHead::LinearHead(Tensor weights, Tensor bias, std::vector<std::size_t> sample_times)
    : weights_(std::move(weights)), bias_(std::move(bias)), sample_times_(std::move(sample_times)) {
  if (weights_.rank() != 2 || weights_.shape()[0] != kTurnClasses) {
    throw std::invalid_argument("LinearHead: weights must be " + std::to_string(kTurnClasses) + " x F, got " +
                                shape_to_string(weights_.shape()));
  }
  if (bias_.shape() != Shape{kTurnClasses}) {
    throw std::invalid_argument("LinearHead: bias must have shape [4], got " + shape_to_string(bias_.shape()));
  }
  if (weights_.shape()[1] < 2 * sample_times_.size()) {
    throw std::invalid_argument("LinearHead: weight width smaller than waypoint features");
  }
}

LinearHead LinearHead::random(std::uint64_t seed, std::size_t horizon, std::size_t width, double scale) {
  std::vector<std::size_t> times(horizon);
  for (std::size_t i = 0; i < horizon; ++i) times[i] = i;
  Rng rng(seed);
  Tensor w({kTurnClasses, 2 * horizon + width});
  for (double& v : w.values()) v = scale * rng.normal();
  Tensor b({kTurnClasses});
  for (double& v : b.values()) v = scale * rng.normal();
  return LinearHead(std::move(w), std::move(b), std::move(times));
}

TurnLogits LinearHead::logits(const Tensor& x0_hat, const ContextEmbedding& c) const {
  if (x0_hat.rank() != 3 || x0_hat.shape()[2] != kStateDim) {
    throw std::invalid_argument("LinearHead: trajectory must be A x T x 4, got " + shape_to_string(x0_hat.shape()));
  }
  if (c.values.rank() != 2) throw std::invalid_argument("LinearHead: embedding must be L x d");
  const std::size_t horizon = x0_hat.shape()[1];
  const std::size_t tokens = c.values.shape()[0];
  const std::size_t width = c.values.shape()[1];
  const std::size_t features = weights_.shape()[1];
  if (features != 2 * sample_times_.size() + width) {
    throw std::invalid_argument("LinearHead: weight width " + std::to_string(features) + " != " +
                                std::to_string(2 * sample_times_.size() + width));
  }

  std::vector<double> f;
  f.reserve(features);
  for (std::size_t ti : sample_times_) {
    if (ti >= horizon) throw std::invalid_argument("LinearHead: sample time out of range");
    f.push_back(x0_hat.at({kEgoAgent, ti, 0}));
    f.push_back(x0_hat.at({kEgoAgent, ti, 1}));
  }
  for (std::size_t j = 0; j < width; ++j) {
    double s = 0.0;
    for (std::size_t l = 0; l < tokens; ++l) s += c.values[l * width + j];
    f.push_back(s / static_cast<double>(tokens));
  }

  TurnLogits out{};
  for (std::size_t k = 0; k < kTurnClasses; ++k) {
    double acc = bias_[k];
    for (std::size_t i = 0; i < features; ++i) acc += weights_[k * features + i] * f[i];
    out[k] = acc;
  }
  return out;
}

std::uint64_t LinearHead::weights_fingerprint() const {
  Fnv1a h;
  h.update_value(fingerprint(weights_));
  h.update_value(fingerprint(bias_));
  return h.digest();
}

int argmax_class(const TurnLogits& logits) {
  int best = 0;
  for (int k = 1; k < static_cast<int>(kTurnClasses); ++k)
    if (logits[k] > logits[best]) best = k;
  return best;
}

int turn_indicator(const TurnHead& head, const Tensor& x0_hat, const ContextEmbedding& c) {
  return argmax_class(head.logits(x0_hat, c));
}

void pad_with_current_state(const Tensor& x_t, std::span<const double> future, Tensor& out) {
  if (x_t.rank() != 3) throw std::invalid_argument("pad_with_current_state: x_t must be A x T x C");
  const std::size_t agents = x_t.shape()[0];
  const std::size_t horizon = x_t.shape()[1];
  const std::size_t ch = x_t.shape()[2];
  if (horizon < 1 || future.size() != agents * (horizon - 1) * ch) {
    throw std::invalid_argument("pad_with_current_state: expected " + std::to_string(agents * (horizon - 1) * ch) +
                                " future values, got " + std::to_string(future.size()));
  }
  require_same_shape(x_t, out, "pad_with_current_state");
  for (std::size_t a = 0; a < agents; ++a) {
    for (std::size_t c = 0; c < ch; ++c) out[(a * horizon) * ch + c] = x_t[(a * horizon) * ch + c];
    for (std::size_t ti = 1; ti < horizon; ++ti)
      for (std::size_t c = 0; c < ch; ++c)
        out[(a * horizon + ti) * ch + c] = future[(a * (horizon - 1) + (ti - 1)) * ch + c];
  }
}

}  // namespace diffsolve
