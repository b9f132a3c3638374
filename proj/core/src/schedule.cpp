#include "treeg/schedule.hpp"

#include <cmath>
#include <stdexcept>

namespace treeg {

namespace {
constexpr double kAlphaBarStart = 1e-4;   // linear-alphabar value at t = 0
constexpr double kCosineFloor = 1e-12;    // keeps the cosine t = 0 node positive
constexpr double kCosineOffset = 0.008;
constexpr double kPi = 3.141592653589793238462643383279;
}  // namespace

ScheduleKind schedule_kind_from_string(const std::string& name) {
  if (name == "linear-alphabar") return ScheduleKind::kLinearAlphaBar;
  if (name == "cosine") return ScheduleKind::kCosine;
  throw std::invalid_argument("unknown schedule kind: " + name);
}

std::string to_string(ScheduleKind kind) {
  return kind == ScheduleKind::kLinearAlphaBar ? "linear-alphabar" : "cosine";
}

NoiseSchedule::NoiseSchedule(ScheduleKind kind, int steps, std::vector<double> alpha_bar)
    : kind_(kind), steps_(steps), alpha_bar_(std::move(alpha_bar)) {
  if (steps_ < 2) throw std::invalid_argument("NoiseSchedule: T must be >= 2");
  if (alpha_bar_.size() != static_cast<std::size_t>(steps_) + 1)
    throw std::invalid_argument("NoiseSchedule: grid size must be T + 1");
  if (alpha_bar_.front() > kAlphaBarStart)
    throw std::invalid_argument("NoiseSchedule: alpha_bar(0) must be <= 1e-4");
  if (alpha_bar_.back() != 1.0)
    throw std::invalid_argument("NoiseSchedule: alpha_bar(1) must equal 1");
  for (std::size_t i = 0; i < alpha_bar_.size(); ++i) {
    const double v = alpha_bar_[i];
    if (!(v > 0.0) || v > 1.0)
      throw std::invalid_argument("NoiseSchedule: alpha_bar must lie in (0, 1]");
    if (i > 0 && !(alpha_bar_[i - 1] < v))
      throw std::invalid_argument("NoiseSchedule: alpha_bar must be strictly increasing");
  }
}

int NoiseSchedule::index_of(double t) const {
  const double scaled = t * steps_;
  const double rounded = std::round(scaled);
  if (std::abs(scaled - rounded) > 1e-9 || rounded < 0.0 || rounded > steps_)
    throw std::invalid_argument("time is not on the schedule grid");
  return static_cast<int>(rounded);
}

double NoiseSchedule::alpha_bar_at(double t) const { return alpha_bar(index_of(t)); }

StepCoeffs NoiseSchedule::coeffs(int i) const {
  if (i < 0 || i >= steps_)
    throw std::invalid_argument("step_coeffs: no step leaves t = 1");
  return step_coeffs_from_alpha_bars(alpha_bar(i), alpha_bar(i + 1));
}

NoiseSchedule build_schedule(ScheduleKind kind, int steps) {
  if (steps < 2) throw std::invalid_argument("build_schedule: T must be >= 2");
  std::vector<double> ab(static_cast<std::size_t>(steps) + 1);
  switch (kind) {
    case ScheduleKind::kLinearAlphaBar: {
      for (int i = 0; i <= steps; ++i) {
        const double t = static_cast<double>(i) / steps;
        ab[static_cast<std::size_t>(i)] = kAlphaBarStart + (1.0 - kAlphaBarStart) * t;
      }
      break;
    }
    case ScheduleKind::kCosine: {
      const auto ramp = [](double u) {
        const double c = std::cos((u + kCosineOffset) / (1.0 + kCosineOffset) * kPi / 2.0);
        return c * c;
      };
      const double norm = ramp(0.0);
      for (int i = 0; i <= steps; ++i) {
        const double t = static_cast<double>(i) / steps;
        double v = ramp(1.0 - t) / norm;
        if (v < kCosineFloor) v = kCosineFloor;
        if (v > 1.0) v = 1.0;
        ab[static_cast<std::size_t>(i)] = v;
      }
      break;
    }
  }
  ab.back() = 1.0;
  return NoiseSchedule(kind, steps, std::move(ab));
}

StepCoeffs step_coeffs(const NoiseSchedule& schedule, double t) {
  return schedule.coeffs(schedule.index_of(t));
}

StepCoeffs step_coeffs_from_alpha_bars(double ab_t, double ab_next) {
  if (!(ab_t > 0.0) || !(ab_next > 0.0) || ab_t > ab_next || ab_next > 1.0)
    throw std::invalid_argument("step_coeffs: need 0 < alpha_bar_t <= alpha_bar_next <= 1");
  StepCoeffs c;
  c.alpha = ab_t / ab_next;
  const double one_minus_alpha = 1.0 - c.alpha;
  c.sigma = std::sqrt(one_minus_alpha);
  const double denom = 1.0 - ab_t;
  if (denom == 0.0) {
    // ab_t = ab_next = 1: degenerate identity step.
    c.c1 = 1.0;
    c.c2 = 0.0;
    c.beta = 0.0;
    return c;
  }
  c.c1 = std::sqrt(c.alpha) * (1.0 - ab_next) / denom;
  c.c2 = std::sqrt(ab_next) * one_minus_alpha / denom;
  c.beta = (1.0 - ab_next) * one_minus_alpha / denom;
  return c;
}

}  // namespace treeg
