#pragma once

#include <cstddef>
#include <vector>

namespace diffsolve {

// Variance-preserving noise schedule with linear beta(t) = beta0 + t*(beta1 - beta0):
//   log alpha(t) = -t^2 (beta1 - beta0) / 4 - t beta0 / 2,   sigma = sqrt(1 - alpha^2).
class VpSchedule {
 public:
  // Smallest time accepted by inverse_lambda(); below it lambda is not
  // resolvable in double precision.
  static constexpr double kMinTime = 1e-9;

  VpSchedule() = default;
  // Throws std::invalid_argument unless beta1 > beta0 > 0.
  VpSchedule(double beta0, double beta1);

  double beta0() const { return beta0_; }
  double beta1() const { return beta1_; }

  // Domain error outside [0, 1].
  double log_alpha(double t) const;
  double alpha(double t) const;
  double sigma(double t) const;
  // log(alpha / sigma); domain error for t <= 0.
  double lambda(double t) const;

  // Time at which the log-SNR equals `lam`. Range error when lam lies outside
  // [lambda(1), lambda(kMinTime)].
  double inverse_lambda(double lam) const;

  friend bool operator==(const VpSchedule&, const VpSchedule&) = default;

 private:
  double beta0_ = 0.1;
  double beta1_ = 20.0;
};

struct Marginal {
  double alpha;
  double sigma;
  double lambda;
};

// alpha, sigma and log-SNR at t in (0, 1].
Marginal alpha_sigma_lambda(const VpSchedule& sched, double t);

// Bisection for lambda(t) = lam on [kMinTime, 1]. The closed-form inverse
// falls back to this when its residual is out of tolerance.
double inverse_lambda_bisect(const VpSchedule& sched, double lam, double tol = 1e-12);

// N+1 continuous times t_0 > ... > t_N, uniform in log-SNR.
class TimestepGrid {
 public:
  TimestepGrid(std::vector<double> timesteps, std::vector<double> lambdas);

  const std::vector<double>& timesteps() const { return timesteps_; }
  const std::vector<double>& lambdas() const { return lambdas_; }
  std::size_t n_steps() const { return timesteps_.size() - 1; }
  double t(std::size_t i) const { return timesteps_[i]; }
  double t_start() const { return timesteps_.front(); }
  double t_end() const { return timesteps_.back(); }

  // First `n` updates of this grid; the result ends at t_n, not t_end.
  TimestepGrid truncated(std::size_t n) const;

  friend bool operator==(const TimestepGrid&, const TimestepGrid&) = default;

 private:
  std::vector<double> timesteps_;
  std::vector<double> lambdas_;
};

inline constexpr double kDefaultTStart = 1.0;
inline constexpr double kDefaultTEnd = 1e-3;

// Throws std::invalid_argument on n_steps == 0 or an empty/out-of-range interval.
TimestepGrid make_grid(const VpSchedule& sched, std::size_t n_steps, double t_start = kDefaultTStart,
                       double t_end = kDefaultTEnd);

}  // namespace diffsolve
