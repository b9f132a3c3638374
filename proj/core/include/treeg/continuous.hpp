#pragma once

#include <memory>
#include <span>
#include <vector>

#include "treeg/rng.hpp"
#include "treeg/schedule.hpp"

namespace treeg {

// A point on the continuous inference path.
struct ContinuousState {
  std::vector<double> x;
  double t = 0.0;
};

// Predicts the clean sample xhat_1 = E[x1 | x_t]. Implementations may expose
// an exact input-sensitivity (vector-Jacobian product); callers fall back to
// finite differences when they do not.
class ContinuousDenoiser {
 public:
  virtual ~ContinuousDenoiser() = default;
  virtual std::vector<double> predict_x1(std::span<const double> x, double t) const = 0;

  virtual bool has_vjp() const { return false; }
  // Returns upstream^T * d(predict_x1)/dx. Only called when has_vjp() is true.
  virtual std::vector<double> vjp(std::span<const double> x, double t,
                                  std::span<const double> upstream) const;
};

// Diagonal-covariance Gaussian mixture standing in for the data distribution.
struct GaussianMixture {
  std::vector<double> weights;                // K, nonnegative, sums to 1
  std::vector<std::vector<double>> means;     // K x D
  std::vector<std::vector<double>> variances; // K x D, strictly positive

  int components() const { return static_cast<int>(weights.size()); }
  int dim() const { return means.empty() ? 0 : static_cast<int>(means.front().size()); }
  void validate() const;  // throws std::invalid_argument on violation
};

// Exact E[x1 | x_t] when x1 ~ gmm and x_t = sqrt(ab) x1 + sqrt(1-ab) eps.
// Component responsibilities are formed in log space with log-sum-exp.
std::vector<double> gmm_posterior_mean(std::span<const double> x, double alpha_bar,
                                       const GaussianMixture& gmm);

// upstream^T * d(gmm_posterior_mean)/dx, in closed form.
std::vector<double> gmm_posterior_mean_vjp(std::span<const double> x, double alpha_bar,
                                           const GaussianMixture& gmm,
                                           std::span<const double> upstream);

class GmmDenoiser final : public ContinuousDenoiser {
 public:
  GmmDenoiser(GaussianMixture gmm, const NoiseSchedule* schedule);

  std::vector<double> predict_x1(std::span<const double> x, double t) const override;
  bool has_vjp() const override { return true; }
  std::vector<double> vjp(std::span<const double> x, double t,
                          std::span<const double> upstream) const override;

  const GaussianMixture& mixture() const { return gmm_; }

 private:
  GaussianMixture gmm_;
  const NoiseSchedule* schedule_;
};

// Forward corruption x_t = sqrt(ab_t) x1 + sqrt(1 - ab_t) eps.
ContinuousState corrupt_continuous(std::span<const double> x1, double t,
                                   const NoiseSchedule& schedule, RngStream& rng);

// One reverse step: x_{t+dt} = c1 x_t + c2 * denoiser(x_t, t) + sigma * eps.
// Throws std::invalid_argument at t = 1.
ContinuousState ddpm_step(const ContinuousState& state, const ContinuousDenoiser& denoiser,
                          const NoiseSchedule& schedule, RngStream& rng);

// Endpoint-conditioned step: sample from N(c1 x_t + c2 x1, beta_t I).
ContinuousState posterior_step(const ContinuousState& state, std::span<const double> x1,
                               const NoiseSchedule& schedule, RngStream& rng);

}  // namespace treeg
