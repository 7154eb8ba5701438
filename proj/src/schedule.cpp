#include "diffsolve/schedule.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace diffsolve {

VpSchedule::VpSchedule(double beta0, double beta1) : beta0_(beta0), beta1_(beta1) {
  if (!(beta0 > 0.0) || !(beta1 > beta0) || !std::isfinite(beta1)) {
    throw std::invalid_argument("VpSchedule: need beta1 > beta0 > 0, got beta0=" + std::to_string(beta0) +
                                " beta1=" + std::to_string(beta1));
  }
}

double VpSchedule::log_alpha(double t) const {
  if (!(t >= 0.0 && t <= 1.0)) throw std::domain_error("VpSchedule: t=" + std::to_string(t) + " outside [0, 1]");
  return -0.25 * t * t * (beta1_ - beta0_) - 0.5 * t * beta0_;
}

double VpSchedule::alpha(double t) const { return std::exp(log_alpha(t)); }

// 1 - alpha^2 = -expm1(2 log alpha) keeps full precision as t -> 0.
double VpSchedule::sigma(double t) const { return std::sqrt(-std::expm1(2.0 * log_alpha(t))); }

double VpSchedule::lambda(double t) const {
  if (!(t > 0.0)) throw std::domain_error("VpSchedule: lambda undefined at t=" + std::to_string(t));
  const double la = log_alpha(t);
  return la - 0.5 * std::log(-std::expm1(2.0 * la));
}

double VpSchedule::inverse_lambda(double lam) const {
  const double lam_lo = lambda(1.0);
  const double lam_hi = lambda(kMinTime);
  const double slack = 1e-12 * std::max(1.0, std::abs(lam_lo));
  if (!(lam >= lam_lo - slack && lam <= lam_hi)) {
    throw std::out_of_range("VpSchedule: lambda=" + std::to_string(lam) + " outside [" + std::to_string(lam_lo) +
                            ", " + std::to_string(lam_hi) + "]");
  }
  // lambda -> log alpha:  alpha^2 = sigmoid(2 lam)  =>  log alpha = -log1p(exp(-2 lam)) / 2.
  // Then solve  (d/4) t^2 + (b0/2) t + log alpha = 0  for the positive root,
  // written in the cancellation-free form  t = 2c / (b0/2 + sqrt(b0^2/4 + d c))  with c = -log alpha.
  const double neg_log_alpha = 0.5 * std::log1p(std::exp(-2.0 * lam));
  const double d = beta1_ - beta0_;
  const double half_b0 = 0.5 * beta0_;
  double t = 2.0 * neg_log_alpha / (half_b0 + std::sqrt(half_b0 * half_b0 + d * neg_log_alpha));
  t = std::min(t, 1.0);
  if (std::isfinite(t) && t >= kMinTime) {
    const double residual = std::abs(lambda(t) - lam);
    if (residual < 1e-10 * std::max(1.0, std::abs(lam))) return t;
  }
  return inverse_lambda_bisect(*this, lam);
}

Marginal alpha_sigma_lambda(const VpSchedule& sched, double t) {
  const double la = sched.log_alpha(t);
  if (!(t > 0.0)) throw std::domain_error("alpha_sigma_lambda: lambda undefined at t=0");
  const double one_minus_a2 = -std::expm1(2.0 * la);
  return {std::exp(la), std::sqrt(one_minus_a2), la - 0.5 * std::log(one_minus_a2)};
}

double inverse_lambda_bisect(const VpSchedule& sched, double lam, double tol) {
  double lo = VpSchedule::kMinTime;
  double hi = 1.0;
  if (lam > sched.lambda(lo) || lam < sched.lambda(hi)) {
    throw std::out_of_range("inverse_lambda_bisect: lambda=" + std::to_string(lam) + " not bracketed");
  }
  // lambda is decreasing in t.
  while (hi - lo > tol) {
    const double mid = 0.5 * (lo + hi);
    if (sched.lambda(mid) > lam)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

TimestepGrid::TimestepGrid(std::vector<double> timesteps, std::vector<double> lambdas)
    : timesteps_(std::move(timesteps)), lambdas_(std::move(lambdas)) {
  if (timesteps_.size() < 2 || lambdas_.size() != timesteps_.size()) {
    throw std::invalid_argument("TimestepGrid: need at least 2 timesteps with matching lambdas");
  }
  for (std::size_t i = 1; i < timesteps_.size(); ++i) {
    if (!(timesteps_[i] < timesteps_[i - 1])) throw std::invalid_argument("TimestepGrid: timesteps not decreasing");
  }
}

TimestepGrid TimestepGrid::truncated(std::size_t n) const {
  if (n == 0 || n > n_steps()) {
    throw std::invalid_argument("TimestepGrid::truncated: n=" + std::to_string(n) + " not in [1, " +
                                std::to_string(n_steps()) + "]");
  }
  return TimestepGrid({timesteps_.begin(), timesteps_.begin() + static_cast<std::ptrdiff_t>(n + 1)},
                      {lambdas_.begin(), lambdas_.begin() + static_cast<std::ptrdiff_t>(n + 1)});
}

TimestepGrid make_grid(const VpSchedule& sched, std::size_t n_steps, double t_start, double t_end) {
  if (n_steps == 0) throw std::invalid_argument("make_grid: n_steps must be >= 1");
  if (!(t_end > 0.0 && t_end < t_start && t_start <= 1.0)) {
    throw std::invalid_argument("make_grid: need 0 < t_end < t_start <= 1, got t_start=" + std::to_string(t_start) +
                                " t_end=" + std::to_string(t_end));
  }
  const double lam_start = sched.lambda(t_start);
  const double lam_end = sched.lambda(t_end);
  const double step = (lam_end - lam_start) / static_cast<double>(n_steps);

  std::vector<double> ts(n_steps + 1);
  std::vector<double> lams(n_steps + 1);
  ts.front() = t_start;
  ts.back() = t_end;
  lams.front() = lam_start;
  lams.back() = lam_end;
  for (std::size_t i = 1; i < n_steps; ++i) {
    lams[i] = lam_start + step * static_cast<double>(i);
    ts[i] = sched.inverse_lambda(lams[i]);
  }
  return TimestepGrid(std::move(ts), std::move(lams));
}

}  // namespace diffsolve
