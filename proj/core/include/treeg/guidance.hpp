#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "treeg/continuous.hpp"
#include "treeg/discrete.hpp"
#include "treeg/matrix.hpp"
#include "treeg/objective.hpp"
#include "treeg/rng.hpp"
#include "treeg/schedule.hpp"

namespace treeg {

enum class GuidanceFamily { kSampleCurrent, kSampleDestination, kGradient };
enum class RatioMode { kTaylor, kExact };
enum class GammaSchedule { kConstant, kLinearRamp };
enum class ValueKind { kAuto, kCurrent, kDestination };

GuidanceFamily guidance_family_from_string(const std::string& name);
std::string to_string(GuidanceFamily family);

// Knobs of the branch-out / value design space.
struct GuidanceConfig {
  GuidanceFamily family = GuidanceFamily::kSampleCurrent;
  ValueKind value_kind = ValueKind::kAuto;
  int branch_size = 1;      // K
  int mc_samples = 1;       // N
  double gamma = 0.0;
  GammaSchedule gamma_schedule = GammaSchedule::kConstant;
  double rho_scale = 1.0;   // s in rho_t = s * sigma_t / sqrt(1 + sigma_t^2)
  int dest_iterations = 1;  // N_iter, continuous destination only
  double tau = 0.15;        // Gumbel-softmax temperature
  bool dsg = false;
  RatioMode ratio_mode = RatioMode::kTaylor;
  double window_start = 0.0;
  double window_end = 1.0;

  bool in_window(double t) const { return t >= window_start && t <= window_end; }
  double gamma_at(double t) const {
    return gamma_schedule == GammaSchedule::kConstant ? gamma : gamma * t;
  }
  // Resolves kAuto to the family's paired value function and rejects
  // mismatched pairs with std::invalid_argument ("invalid-configuration").
  ValueKind paired_value() const;
  void validate() const;
};

// Runtime counts of the cost units. Conventions:
//  - model_calls: denoiser forward passes made to propose steps and to
//    evaluate candidate values;
//  - pred_calls: objective/predictor evaluations of candidate values and
//    destination refinements;
//  - backprop_calls: one unit per gradient computation, inclusive of the
//    internal forward passes it needs (the parent model pass, the Monte-Carlo
//    predictor forwards, and the lazy denoiser Jacobian).
// Out-of-window steps cost one model pass per active member; the final
// argmax over the active set is not counted.
struct CostCounters {
  std::uint64_t model_calls = 0;
  std::uint64_t pred_calls = 0;
  std::uint64_t backprop_calls = 0;

  CostCounters& operator+=(const CostCounters& other) {
    model_calls += other.model_calls;
    pred_calls += other.pred_calls;
    backprop_calls += other.backprop_calls;
    return *this;
  }
  bool operator==(const CostCounters&) const = default;
};

// The continuous generative core: schedule + denoiser + dimensionality.
struct ContinuousCore {
  const NoiseSchedule* schedule = nullptr;
  std::shared_ptr<const ContinuousDenoiser> denoiser;
  int dim = 0;
};

// The discrete generative core: uniform T-step grid + denoiser.
struct DiscreteCore {
  int steps = 0;  // T; dt = 1/T
  std::shared_ptr<const DiscreteDenoiser> denoiser;
  int dim = 0;
  int n_states = 0;

  double dt() const { return 1.0 / steps; }
  // Gradient-family operations need the enumerable tabular denoiser.
  const TabularDenoiser& tabular() const;
};

struct ContinuousCandidate {
  ContinuousState next;
  std::optional<std::vector<double>> destination;
  double value = 0.0;
};

struct DiscreteCandidate {
  DiscreteSequence next;
  std::optional<std::vector<int>> destination;
  double value = 0.0;
};

// rho_t = s * sigma_t / sqrt(1 + sigma_t^2)
double destination_step_size(double rho_scale, double sigma_t);

// ------------------------- current-state pair ------------------------------

// One draw of the original generation process (no destination attached).
ContinuousCandidate branch_out_current(const ContinuousState& x, const ContinuousCore& core,
                                       RngStream& rng, CostCounters* counters = nullptr);
DiscreteCandidate branch_out_current(const DiscreteSequence& x, const DiscreteCore& core,
                                     RngStream& rng, CostCounters* counters = nullptr);

// Lookahead value of a state: f_y of the predicted clean sample (continuous
// point estimate) or the N-sample Monte-Carlo average (discrete).
double value_current(const ContinuousState& x, const ContinuousCore& core,
                     const ContinuousObjective& objective, RngStream& rng,
                     CostCounters* counters = nullptr);
double value_current(const DiscreteSequence& x, const DiscreteCore& core,
                     const DiscreteObjective& objective, int n_samples, RngStream& rng,
                     CostCounters* counters = nullptr);

// Training-free estimate of log p_t(y | x): the Monte-Carlo average of f_y
// over per-dimension denoiser draws. Identical to the discrete value_current.
double mc_log_py(const DiscreteSequence& x, const DiscreteCore& core,
                 const DiscreteObjective& objective, int n_samples, RngStream& rng,
                 CostCounters* counters = nullptr);

// Exact expectation of f_y under independent per-dimension draws from
// `prediction`, by enumeration over [S]^D. Oracle-grade; desk scale only.
double enumerated_log_py(const RowMatrix& prediction, const DiscreteObjective& objective);

// Draw one full clean sequence from per-dimension categorical predictions.
std::vector<int> draw_x1(const RowMatrix& prediction, RngStream& rng);

// ----------------------- destination-state pair ----------------------------

// Iterated destination refinement plus the noise-schedule step; the refined
// destination and its objective value ride along on the candidate.
// With dsg, the selected direction is rescaled to norm sqrt(D) and injected
// in the noise slot; a zero direction falls back to the plain noise draw.
ContinuousCandidate branch_out_destination_continuous(const ContinuousState& x,
                                                      const ContinuousCore& core,
                                                      const ContinuousObjective& objective,
                                                      const GuidanceConfig& config, RngStream& rng,
                                                      CostCounters* counters = nullptr);

// Draw a full destination sequence from the denoiser and advance with the
// destination-conditioned rate.
DiscreteCandidate branch_out_destination_discrete(const DiscreteSequence& x,
                                                  const DiscreteCore& core,
                                                  const DiscreteObjective& objective,
                                                  RngStream& rng,
                                                  CostCounters* counters = nullptr);

// --------------------------- gradient family -------------------------------

// Tempered softmax of logits + gumbels; the zero-temperature limit is the
// hard one-hot of the perturbed argmax.
std::vector<double> gumbel_softmax(std::span<const double> logits,
                                   std::span<const double> gumbels, double tau);

// Straight-through Gumbel-softmax estimate of the gradient of
// (1/N) sum_i f_y(xhat_1^i) with respect to the relaxed current state.
// The relaxation has S + 1 columns per dimension (the last is the mask), and
// the output is centered so that the column of the current token is zero:
// entry (d, j) estimates log p_t(y | x with x^(d) := j) - log p_t(y | x).
// Throws std::invalid_argument for tau <= 0.
RowMatrix st_gumbel_gradient(const DiscreteSequence& x, const DiscreteCore& core,
                             const OnehotPredictor& predictor, int n_samples, double tau,
                             RngStream& rng, CostCounters* counters = nullptr);
RowMatrix st_gumbel_gradient_from(const DiscreteSequence& x, const NeighborPosteriors& nb,
                                  const OnehotPredictor& predictor, int n_samples, double tau,
                                  RngStream& rng, CostCounters* counters = nullptr);

// Exact gradient of the enumerated expectation E[f_y] with respect to the
// relaxed current state, through the denoiser's multilinear extension.
// Same shape and centering as st_gumbel_gradient; oracle for the estimator.
RowMatrix expected_value_gradient(const DiscreteSequence& x, const NeighborPosteriors& nb,
                                  const DiscreteObjective& objective);

// First-order log-ratios from a relaxed-state gradient: entry (d, j) is the
// inner product of the one-hot displacement (x with x^(d) := j) - x with the
// gradient, i.e. grad[d, j] - grad[d, column(x^(d))].
RowMatrix taylor_ratios(const DiscreteSequence& x, const RowMatrix& grad);

// Direct estimate of the same log-ratios: mc_log_py at each single-token
// neighbor minus mc_log_py at x, with common random numbers across neighbors.
// n_samples = 0 switches to exact enumeration (used by the 1e-10 oracle
// checks; Monte-Carlo noise cannot reach that tolerance). Off-support
// neighbors get ratio 0; their rates are structurally zero anyway.
RowMatrix exact_ratios(const DiscreteSequence& x, const DiscreteCore& core,
                       const DiscreteObjective& objective, int n_samples, RngStream& rng,
                       CostCounters* counters = nullptr);
RowMatrix exact_ratios_from(const DiscreteSequence& x, const NeighborPosteriors& nb,
                            const DiscreteObjective& objective, int n_samples, RngStream& rng,
                            CostCounters* counters = nullptr);

// Entry-wise tilt R'(x, j) = exp(gamma * ratios[d, j]) * R(x, j); exponents
// are clipped to +-50 and structural zeros are preserved.
RateSpec guided_rate(const RateSpec& rates, const RowMatrix& ratios, double gamma);

// Continuous gradient-guided step:
//   x_{t+dt} = gamma * grad + c1 x_t + c2 xhat_1 + sigma eps,
// with grad = d f_y(denoiser(x)) / dx via the denoiser's closed-form vjp, or
// central finite differences (step 1e-5 |x| + 1e-8) when no vjp is exposed.
ContinuousCandidate gradient_step_continuous(const ContinuousState& x, const ContinuousCore& core,
                                             const ContinuousPredictor& predictor, double gamma,
                                             RngStream& rng, CostCounters* counters = nullptr);

}  // namespace treeg
