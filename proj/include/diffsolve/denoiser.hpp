#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "diffsolve/schedule.hpp"
#include "diffsolve/tensor.hpp"

namespace diffsolve {

// Trajectory tensor layout: agents x timesteps x (x, y, cos theta, sin theta).
inline constexpr std::size_t kAgents = 33;
inline constexpr std::size_t kHorizon = 81;
inline constexpr std::size_t kStateDim = 4;
inline constexpr std::size_t kEgoAgent = 0;

// Context embedding rows x width.
inline constexpr std::size_t kEmbeddingTokens = 226;
inline constexpr std::size_t kEmbeddingWidth = 256;

inline Shape trajectory_shape(std::size_t agents = kAgents, std::size_t horizon = kHorizon) {
  return {agents, horizon, kStateDim};
}

// Shapes of the six scene-context inputs.
struct SceneLayout {
  Shape ego_history{21, 4};
  Shape neighbor_tracks{32, 21, 4};
  Shape lane_geometry{70, 20, 4};
  Shape route{25, 20, 4};
  Shape traffic_signals{70, 4};
  Shape goal_pose{4};

  // 32 values in total; sized for the synthetic graph fixtures.
  static SceneLayout compact();
  std::size_t total_size() const;
  friend bool operator==(const SceneLayout&, const SceneLayout&) = default;
};

// Encoder input. Shapes are fixed at construction; the canonical byte form is
// what the encoder cache keys on.
class SceneContext {
 public:
  static constexpr std::size_t kFieldCount = 6;
  static const std::array<const char*, kFieldCount>& field_names();

  explicit SceneContext(const SceneLayout& layout = {});

  const Tensor& field(std::size_t i) const { return fields_[i]; }
  // Values may change; shapes may not.
  std::span<double> mutable_values(std::size_t i) { return fields_[i].values(); }

  const Tensor& ego_history() const { return fields_[0]; }
  const Tensor& neighbor_tracks() const { return fields_[1]; }
  const Tensor& lane_geometry() const { return fields_[2]; }
  const Tensor& route() const { return fields_[3]; }
  const Tensor& traffic_signals() const { return fields_[4]; }
  const Tensor& goal_pose() const { return fields_[5]; }

  std::size_t total_size() const;
  // All fields concatenated in declaration order.
  std::vector<double> flatten() const;
  // name, rank, dims and little-endian f64 values of every field, in order.
  std::string canonical_bytes() const;
  std::uint64_t content_hash() const;

  friend bool operator==(const SceneContext&, const SceneContext&) = default;

 private:
  std::array<Tensor, kFieldCount> fields_;
};

struct ContextEmbedding {
  Tensor values;
  friend bool operator==(const ContextEmbedding&, const ContextEmbedding&) = default;
};

class EncoderModel {
 public:
  virtual ~EncoderModel() = default;
  virtual ContextEmbedding encode(const SceneContext& ctx) const = 0;
  virtual std::uint64_t weights_fingerprint() const = 0;
};

// x0-predictor: (x_t, c, t) -> estimate of the clean trajectory.
class DenoiserModel {
 public:
  virtual ~DenoiserModel() = default;

  // Writes the prediction into `out`, which the caller sizes like x_t.
  // Implementations must not allocate in steady state.
  virtual void predict(const Tensor& x_t, const ContextEmbedding& c, double t, Tensor& out) const = 0;
  virtual std::uint64_t weights_fingerprint() const = 0;

  // Checks t in (0, 1] and wraps backend failures with t attached.
  Tensor predict_x0(const Tensor& x_t, const ContextEmbedding& c, double t) const;
};

class DenoiserError : public std::runtime_error {
 public:
  DenoiserError(double t, const std::string& what);
  double t() const { return t_; }

 private:
  double t_;
};

// Exact posterior mean for elementwise Gaussian data x0 ~ N(mean, variance):
//   E[x0 | x_t] = mean + alpha v (x_t - alpha mean) / (alpha^2 v + sigma^2).
// Ignores the context embedding.
class GaussianDenoiser final : public DenoiserModel {
 public:
  static constexpr double kDefaultVariance = 0.25;

  GaussianDenoiser(Tensor mean, Tensor variance, VpSchedule schedule = {});
  GaussianDenoiser(Tensor mean, double variance, VpSchedule schedule = {});
  // mean ~ N(0, mean_scale^2) per element from Rng(seed).
  static GaussianDenoiser from_seed(std::uint64_t seed, const Shape& shape, double variance = kDefaultVariance,
                                    double mean_scale = 1.0, VpSchedule schedule = {});

  void predict(const Tensor& x_t, const ContextEmbedding& c, double t, Tensor& out) const override;
  std::uint64_t weights_fingerprint() const override;

  const Tensor& mean() const { return mean_; }
  const Tensor& variance() const { return variance_; }
  const VpSchedule& schedule() const { return schedule_; }

  // Probability-flow ODE solution from (x_s, s) to time t. For Gaussian data
  // the standardized value (x - alpha mean) / sqrt(alpha^2 v + sigma^2) is
  // conserved along the flow.
  Tensor exact_flow(const Tensor& x_s, double s, double t) const;

 private:
  Tensor mean_;
  Tensor variance_;
  VpSchedule schedule_;
};

// Fixture file: {"seed", "shape", "variance", "mean_scale", "beta0", "beta1"}
// plus an optional explicit "mean" array that overrides the seeded draw.
struct GaussianFixture {
  std::uint64_t seed = 0;
  Shape shape = trajectory_shape();
  double variance = GaussianDenoiser::kDefaultVariance;
  double mean_scale = 1.0;
  VpSchedule schedule{};
  std::vector<double> mean;

  GaussianDenoiser build() const;
  std::string to_json() const;
  static GaussianFixture from_json(const std::string& text);
};

// Synthetic context encoder: token l, channel j of the embedding is
//   tanh(bias_j + sum_k W_jk * u[(l * taps + k) mod U])
// over the flattened scene u. Deterministic for a given seed.
class ProjectionEncoder final : public EncoderModel {
 public:
  ProjectionEncoder(std::uint64_t seed, std::size_t tokens = kEmbeddingTokens, std::size_t width = kEmbeddingWidth,
                    std::size_t taps = 16);

  ContextEmbedding encode(const SceneContext& ctx) const override;
  std::uint64_t weights_fingerprint() const override;

 private:
  std::size_t tokens_;
  std::size_t width_;
  std::size_t taps_;
  std::vector<double> weights_;  // width x taps
  std::vector<double> bias_;     // width
};

// Pass-through wrapper that counts invocations of the wrapped encoder.
class CountingEncoder final : public EncoderModel {
 public:
  explicit CountingEncoder(std::shared_ptr<const EncoderModel> inner) : inner_(std::move(inner)) {}

  ContextEmbedding encode(const SceneContext& ctx) const override;
  std::uint64_t weights_fingerprint() const override { return inner_->weights_fingerprint(); }

  std::uint64_t calls() const { return calls_.load(std::memory_order_relaxed); }

 private:
  std::shared_ptr<const EncoderModel> inner_;
  mutable std::atomic<std::uint64_t> calls_{0};
};

inline constexpr std::size_t kTurnClasses = 4;
using TurnLogits = std::array<double, kTurnClasses>;

class TurnHead {
 public:
  virtual ~TurnHead() = default;
  virtual TurnLogits logits(const Tensor& x0_hat, const ContextEmbedding& c) const = 0;
  virtual std::uint64_t weights_fingerprint() const = 0;
};

// Affine map over [x, y of the sampled ego waypoints, token-mean of c].
// Sample times default to every ego waypoint.
class LinearHead final : public TurnHead {
 public:
  // weights: kTurnClasses x (2 * |sample_times| + width), bias: kTurnClasses.
  LinearHead(Tensor weights, Tensor bias, std::vector<std::size_t> sample_times);
  static LinearHead random(std::uint64_t seed, std::size_t horizon, std::size_t width, double scale = 0.1);

  TurnLogits logits(const Tensor& x0_hat, const ContextEmbedding& c) const override;
  std::uint64_t weights_fingerprint() const override;

  const std::vector<std::size_t>& sample_times() const { return sample_times_; }

 private:
  Tensor weights_;
  Tensor bias_;
  std::vector<std::size_t> sample_times_;
};

// Lowest index wins ties.
int argmax_class(const TurnLogits& logits);
int turn_indicator(const TurnHead& head, const Tensor& x0_hat, const ContextEmbedding& c);

// Expands a prediction over T-1 future steps back to T by writing x_t's
// index-0 slice (the anchored current state) in front of it.
void pad_with_current_state(const Tensor& x_t, std::span<const double> future, Tensor& out);

std::uint64_t fingerprint(const Tensor& t);

}  // namespace diffsolve
