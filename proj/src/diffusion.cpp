#include "facediff/diffusion.hpp"

#include "facediff/error.hpp"

#include <cmath>
#include <string>

namespace facediff {

NoiseSchedule::NoiseSchedule(std::vector<double> betas) : beta_(std::move(betas)) {
  if (beta_.empty()) throw ConfigError("schedule: at least one step required");
  alpha_.reserve(beta_.size());
  alpha_bar_.reserve(beta_.size());
  double prod = 1.0;
  for (std::size_t i = 0; i < beta_.size(); ++i) {
    const double b = beta_[i];
    if (!(b > 0.0 && b < 1.0)) {
      throw ConfigError("schedule: beta[" + std::to_string(i + 1) + "] = " + std::to_string(b) +
                        " outside (0, 1)");
    }
    alpha_.push_back(1.0 - b);
    const double next = prod * (1.0 - b);
    if (!(next < prod)) {
      throw ConfigError("schedule: alpha_bar not strictly decreasing at t=" + std::to_string(i + 1));
    }
    prod = next;
    alpha_bar_.push_back(prod);
  }
}

std::size_t NoiseSchedule::checked(std::size_t t) const {
  if (t < 1 || t > beta_.size()) {
    throw StepError("diffusion step " + std::to_string(t) + " outside [1, " +
                    std::to_string(beta_.size()) + "]");
  }
  return t - 1;
}

NoiseSchedule build_schedule(const ScheduleConfig& config) {
  if (config.steps < 1) throw ConfigError("schedule: T must be >= 1");
  if (!(config.beta_start > 0.0 && config.beta_start <= config.beta_end && config.beta_end < 1.0)) {
    throw ConfigError("schedule: require 0 < beta_start <= beta_end < 1");
  }
  std::vector<double> betas(config.steps);
  for (std::size_t i = 0; i < config.steps; ++i) {
    const double frac =
        config.steps == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(config.steps - 1);
    betas[i] = config.beta_start + (config.beta_end - config.beta_start) * frac;
  }
  NoiseSchedule schedule(std::move(betas));
  if (config.max_terminal_alpha_bar &&
      !(schedule.alpha_bar(schedule.steps()) < *config.max_terminal_alpha_bar)) {
    throw ConfigError("schedule: alpha_bar[T] = " + std::to_string(schedule.alpha_bar(schedule.steps())) +
                      " is not below " + std::to_string(*config.max_terminal_alpha_bar) +
                      "; x_T would not be close to N(0, I)");
  }
  return schedule;
}

Matrix forward_sample(const Matrix& x0, std::size_t t, const Matrix& eps,
                      const NoiseSchedule& schedule) {
  require_same_shape(x0, eps, "forward_sample");
  const double ab = schedule.alpha_bar(t);
  return std::sqrt(ab) * x0 + std::sqrt(1.0 - ab) * eps;
}

Matrix predict_mu(const Matrix& x_t, std::size_t t, const Matrix& eps_hat,
                  const NoiseSchedule& schedule) {
  require_same_shape(x_t, eps_hat, "predict_mu");
  const double a = schedule.alpha(t);
  const double ab = schedule.alpha_bar(t);
  const double coef = (1.0 - a) / std::sqrt(1.0 - ab);
  return (x_t - coef * eps_hat) / std::sqrt(a);
}

Matrix reverse_step(const Matrix& x_t, std::size_t t, const Matrix& eps_hat, const Matrix& z,
                    const NoiseSchedule& schedule) {
  require_same_shape(x_t, z, "reverse_step");
  Matrix mu = predict_mu(x_t, t, eps_hat, schedule);
  if (t == 1) return mu;
  return mu + std::sqrt(schedule.beta(t)) * z;
}

double simple_loss(const Matrix& eps, const Matrix& eps_hat) {
  require_same_shape(eps, eps_hat, "simple_loss");
  if (eps.size() == 0) throw DimensionError("simple_loss: empty tensors");
  return (eps - eps_hat).squaredNorm() / static_cast<double>(eps.size());
}

Matrix cfg_combine(const Matrix& eps_cond, const Matrix& eps_uncond, double w) {
  require_same_shape(eps_cond, eps_uncond, "cfg_combine");
  return (w + 1.0) * eps_cond - w * eps_uncond;
}

}  // namespace facediff
