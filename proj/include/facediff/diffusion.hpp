#pragma once

#include "facediff/tensor.hpp"

#include <cstddef>
#include <optional>
#include <vector>

namespace facediff {

enum class ScheduleKind { kLinear };

struct ScheduleConfig {
  std::size_t steps = 1000;
  double beta_start = 1e-4;
  double beta_end = 0.02;
  ScheduleKind kind = ScheduleKind::kLinear;
  // Upper bound enforced on alpha_bar[T]; unset disables the check.
  std::optional<double> max_terminal_alpha_bar = 0.01;
};

// Precomputed DDPM tables, indexed by diffusion step t = 1..T.
class NoiseSchedule {
 public:
  // From explicit betas; validates 0 < beta < 1 and strictly decreasing alpha_bar.
  explicit NoiseSchedule(std::vector<double> betas);

  std::size_t steps() const noexcept { return beta_.size(); }
  double beta(std::size_t t) const { return beta_.at(checked(t)); }
  double alpha(std::size_t t) const { return alpha_.at(checked(t)); }
  double alpha_bar(std::size_t t) const { return alpha_bar_.at(checked(t)); }

 private:
  std::size_t checked(std::size_t t) const;

  std::vector<double> beta_;
  std::vector<double> alpha_;
  std::vector<double> alpha_bar_;
};

// Linear beta interpolation from beta_start (t=1) to beta_end (t=T).
// Throws ConfigError on an invalid range or when the terminal bound is violated.
NoiseSchedule build_schedule(const ScheduleConfig& config);

// sqrt(alpha_bar_t) * x0 + sqrt(1 - alpha_bar_t) * eps.
Matrix forward_sample(const Matrix& x0, std::size_t t, const Matrix& eps,
                      const NoiseSchedule& schedule);

// Mean of p(x_{t-1} | x_t) for an epsilon-prediction model.
Matrix predict_mu(const Matrix& x_t, std::size_t t, const Matrix& eps_hat,
                  const NoiseSchedule& schedule);

// mu + sqrt(beta_t) * z; at t = 1 the noise term is dropped.
Matrix reverse_step(const Matrix& x_t, std::size_t t, const Matrix& eps_hat, const Matrix& z,
                    const NoiseSchedule& schedule);

// Mean over all entries of (eps - eps_hat)^2.
double simple_loss(const Matrix& eps, const Matrix& eps_hat);

// (w + 1) * eps_cond - w * eps_uncond.
Matrix cfg_combine(const Matrix& eps_cond, const Matrix& eps_uncond, double w);

}  // namespace facediff
