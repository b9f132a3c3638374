#include "treeg/continuous.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace treeg {

namespace {
constexpr double kLog2Pi = 1.8378770664093454835606594728112;

void require_finite(std::span<const double> v, const char* what) {
  for (double e : v)
    if (!std::isfinite(e)) throw std::invalid_argument(std::string(what) + ": non-finite entry");
}
}  // namespace

std::vector<double> ContinuousDenoiser::vjp(std::span<const double>, double,
                                            std::span<const double>) const {
  throw std::logic_error("denoiser does not expose a vjp");
}

void GaussianMixture::validate() const {
  const int k = components();
  if (k == 0) throw std::invalid_argument("GaussianMixture: no components");
  if (static_cast<int>(means.size()) != k || static_cast<int>(variances.size()) != k)
    throw std::invalid_argument("GaussianMixture: weights/means/variances size mismatch");
  const int d = dim();
  double sum = 0.0;
  for (int i = 0; i < k; ++i) {
    if (weights[static_cast<std::size_t>(i)] < 0.0)
      throw std::invalid_argument("GaussianMixture: negative weight");
    sum += weights[static_cast<std::size_t>(i)];
    if (static_cast<int>(means[static_cast<std::size_t>(i)].size()) != d ||
        static_cast<int>(variances[static_cast<std::size_t>(i)].size()) != d)
      throw std::invalid_argument("GaussianMixture: ragged component");
    for (double v : variances[static_cast<std::size_t>(i)])
      if (!(v > 0.0)) throw std::invalid_argument("GaussianMixture: variance must be > 0");
  }
  if (std::abs(sum - 1.0) > 1e-12)
    throw std::invalid_argument("GaussianMixture: weights must sum to 1 within 1e-12");
}

namespace {

// Log responsibilities of each component for observing x at noise level ab.
// Marginally x | k ~ N(sqrt(ab) mu_k, ab v_k + (1 - ab)) per dimension.
std::vector<double> log_responsibilities(std::span<const double> x, double alpha_bar,
                                         const GaussianMixture& gmm) {
  const int k = gmm.components();
  const int d = static_cast<int>(x.size());
  const double root_ab = std::sqrt(alpha_bar);
  std::vector<double> logw(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) {
    const auto& mu = gmm.means[static_cast<std::size_t>(i)];
    const auto& v = gmm.variances[static_cast<std::size_t>(i)];
    double ll = std::log(std::max(gmm.weights[static_cast<std::size_t>(i)], 1e-300));
    for (int j = 0; j < d; ++j) {
      const double s = alpha_bar * v[static_cast<std::size_t>(j)] + (1.0 - alpha_bar);
      const double r = x[static_cast<std::size_t>(j)] - root_ab * mu[static_cast<std::size_t>(j)];
      ll += -0.5 * (r * r / s + std::log(s) + kLog2Pi);
    }
    logw[static_cast<std::size_t>(i)] = ll;
  }
  const double m = *std::max_element(logw.begin(), logw.end());
  double z = 0.0;
  for (double& l : logw) {
    l = std::exp(l - m);
    z += l;
  }
  for (double& l : logw) l = std::log(l / z);
  return logw;  // now log r_k, normalized
}

}  // namespace

std::vector<double> gmm_posterior_mean(std::span<const double> x, double alpha_bar,
                                       const GaussianMixture& gmm) {
  gmm.validate();
  const int k = gmm.components();
  const int d = static_cast<int>(x.size());
  const double root_ab = std::sqrt(alpha_bar);
  std::vector<double> out(static_cast<std::size_t>(d), 0.0);
  if (alpha_bar >= 1.0) {
    // Zero noise: the clean sample is observed.
    return std::vector<double>(x.begin(), x.end());
  }
  const auto logr = log_responsibilities(x, alpha_bar, gmm);
  for (int i = 0; i < k; ++i) {
    const double r = std::exp(logr[static_cast<std::size_t>(i)]);
    const auto& mu = gmm.means[static_cast<std::size_t>(i)];
    const auto& v = gmm.variances[static_cast<std::size_t>(i)];
    for (int j = 0; j < d; ++j) {
      const double vj = v[static_cast<std::size_t>(j)];
      const double s = alpha_bar * vj + (1.0 - alpha_bar);
      // Per-component Gaussian posterior mean of x1 given x.
      const double m =
          (mu[static_cast<std::size_t>(j)] * (1.0 - alpha_bar) + root_ab * vj * x[static_cast<std::size_t>(j)]) / s;
      out[static_cast<std::size_t>(j)] += r * m;
    }
  }
  return out;
}

std::vector<double> gmm_posterior_mean_vjp(std::span<const double> x, double alpha_bar,
                                           const GaussianMixture& gmm,
                                           std::span<const double> upstream) {
  gmm.validate();
  const int k = gmm.components();
  const int d = static_cast<int>(x.size());
  const double root_ab = std::sqrt(alpha_bar);
  if (alpha_bar >= 1.0) return std::vector<double>(upstream.begin(), upstream.end());

  const auto logr = log_responsibilities(x, alpha_bar, gmm);
  std::vector<double> r(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) r[static_cast<std::size_t>(i)] = std::exp(logr[static_cast<std::size_t>(i)]);

  // Per-component posterior means m_k and their inner products with upstream.
  std::vector<double> dot_gm(static_cast<std::size_t>(k), 0.0);
  for (int i = 0; i < k; ++i) {
    const auto& mu = gmm.means[static_cast<std::size_t>(i)];
    const auto& v = gmm.variances[static_cast<std::size_t>(i)];
    for (int j = 0; j < d; ++j) {
      const double vj = v[static_cast<std::size_t>(j)];
      const double s = alpha_bar * vj + (1.0 - alpha_bar);
      const double m =
          (mu[static_cast<std::size_t>(j)] * (1.0 - alpha_bar) + root_ab * vj * x[static_cast<std::size_t>(j)]) / s;
      dot_gm[static_cast<std::size_t>(i)] += upstream[static_cast<std::size_t>(j)] * m;
    }
  }

  std::vector<double> out(static_cast<std::size_t>(d), 0.0);
  for (int j = 0; j < d; ++j) {
    // a_{k,j} = d log N_k / d x_j for the marginal of component k.
    double abar_j = 0.0;
    std::vector<double> a(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) {
      const double vj = gmm.variances[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
      const double s = alpha_bar * vj + (1.0 - alpha_bar);
      const double aij =
          -(x[static_cast<std::size_t>(j)] - root_ab * gmm.means[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]) / s;
      a[static_cast<std::size_t>(i)] = aij;
      abar_j += r[static_cast<std::size_t>(i)] * aij;
    }
    double acc = 0.0;
    for (int i = 0; i < k; ++i) {
      const double vj = gmm.variances[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
      const double s = alpha_bar * vj + (1.0 - alpha_bar);
      acc += r[static_cast<std::size_t>(i)] * (a[static_cast<std::size_t>(i)] - abar_j) * dot_gm[static_cast<std::size_t>(i)];
      acc += r[static_cast<std::size_t>(i)] * (root_ab * vj / s) * upstream[static_cast<std::size_t>(j)];
    }
    out[static_cast<std::size_t>(j)] = acc;
  }
  return out;
}

GmmDenoiser::GmmDenoiser(GaussianMixture gmm, const NoiseSchedule* schedule)
    : gmm_(std::move(gmm)), schedule_(schedule) {
  gmm_.validate();
}

std::vector<double> GmmDenoiser::predict_x1(std::span<const double> x, double t) const {
  return gmm_posterior_mean(x, schedule_->alpha_bar_at(t), gmm_);
}

std::vector<double> GmmDenoiser::vjp(std::span<const double> x, double t,
                                     std::span<const double> upstream) const {
  return gmm_posterior_mean_vjp(x, schedule_->alpha_bar_at(t), gmm_, upstream);
}

ContinuousState corrupt_continuous(std::span<const double> x1, double t,
                                   const NoiseSchedule& schedule, RngStream& rng) {
  require_finite(x1, "corrupt_continuous");
  const double ab = schedule.alpha_bar_at(t);
  const double root_ab = std::sqrt(ab);
  const double noise_scale = std::sqrt(1.0 - ab);
  ContinuousState out;
  out.t = t;
  out.x.resize(x1.size());
  for (std::size_t i = 0; i < x1.size(); ++i)
    out.x[i] = root_ab * x1[i] + noise_scale * rng.normal();
  return out;
}

ContinuousState ddpm_step(const ContinuousState& state, const ContinuousDenoiser& denoiser,
                          const NoiseSchedule& schedule, RngStream& rng) {
  const int i = schedule.index_of(state.t);
  const StepCoeffs c = schedule.coeffs(i);  // throws at t = 1
  const auto xhat = denoiser.predict_x1(state.x, state.t);
  ContinuousState out;
  out.t = schedule.time(i + 1);
  out.x.resize(state.x.size());
  for (std::size_t j = 0; j < state.x.size(); ++j)
    out.x[j] = c.c1 * state.x[j] + c.c2 * xhat[j] + c.sigma * rng.normal();
  return out;
}

ContinuousState posterior_step(const ContinuousState& state, std::span<const double> x1,
                               const NoiseSchedule& schedule, RngStream& rng) {
  const int i = schedule.index_of(state.t);
  const StepCoeffs c = schedule.coeffs(i);
  const double noise_scale = std::sqrt(c.beta);
  ContinuousState out;
  out.t = schedule.time(i + 1);
  out.x.resize(state.x.size());
  for (std::size_t j = 0; j < state.x.size(); ++j)
    out.x[j] = c.c1 * state.x[j] + c.c2 * x1[j] + noise_scale * rng.normal();
  return out;
}

}  // namespace treeg
