#pragma once

#include <string>
#include <vector>

namespace treeg {

// Per-step coefficients of the reverse sampling step from t to t + dt:
//   x_{t+dt} = c1 * x_t + c2 * xhat_1 + sigma * eps
// plus the posterior variance beta used when the path endpoint is given.
struct StepCoeffs {
  double alpha = 1.0;  // alpha_bar(t) / alpha_bar(t + dt)
  double sigma = 0.0;  // sqrt(1 - alpha)
  double c1 = 1.0;
  double c2 = 0.0;
  double beta = 0.0;  // (1 - alpha_bar(t+dt)) * (1 - alpha) / (1 - alpha_bar(t))
};

enum class ScheduleKind { kLinearAlphaBar, kCosine };

ScheduleKind schedule_kind_from_string(const std::string& name);
std::string to_string(ScheduleKind kind);

// Uniform time grid t_i = i / T with a strictly increasing signal-retention
// curve alpha_bar. Convention: t = 0 is (near-)pure noise, t = 1 is clean
// data with alpha_bar exactly 1. Immutable after construction.
class NoiseSchedule {
 public:
  NoiseSchedule(ScheduleKind kind, int steps, std::vector<double> alpha_bar);

  int steps() const { return steps_; }
  double dt() const { return 1.0 / steps_; }
  double time(int i) const { return static_cast<double>(i) / steps_; }
  ScheduleKind kind() const { return kind_; }

  double alpha_bar(int i) const { return alpha_bar_.at(static_cast<std::size_t>(i)); }
  // Lookup by grid time; throws std::invalid_argument off the grid.
  double alpha_bar_at(double t) const;

  // Grid index for a time value; throws if t is not a grid node.
  int index_of(double t) const;

  StepCoeffs coeffs(int i) const;

 private:
  ScheduleKind kind_;
  int steps_;
  std::vector<double> alpha_bar_;  // size steps_ + 1
};

// Builds the named schedule. linear-alphabar interpolates alpha_bar between
// 1e-4 and 1 on the grid; cosine uses a squared-cosine ramp with offset
// 0.008, floored at 1e-12 so the t = 0 node stays strictly positive.
// Throws std::invalid_argument for T < 2.
NoiseSchedule build_schedule(ScheduleKind kind, int steps);

// Coefficients for the step leaving grid time t. Throws std::invalid_argument
// when t is off-grid or t = 1 (no next step).
StepCoeffs step_coeffs(const NoiseSchedule& schedule, double t);

// Coefficients from a raw (alpha_bar_t, alpha_bar_next) pair. Exposed for
// property tests over arbitrary pairs.
StepCoeffs step_coeffs_from_alpha_bars(double ab_t, double ab_next);

}  // namespace treeg
