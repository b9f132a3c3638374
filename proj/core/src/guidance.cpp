#include "treeg/guidance.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace treeg {

namespace {
constexpr double kLogFloor = 1e-300;
constexpr double kExpClip = 50.0;
}  // namespace

GuidanceFamily guidance_family_from_string(const std::string& name) {
  if (name == "sample-current") return GuidanceFamily::kSampleCurrent;
  if (name == "sample-destination") return GuidanceFamily::kSampleDestination;
  if (name == "gradient") return GuidanceFamily::kGradient;
  throw std::invalid_argument("unknown guidance family: " + name);
}

std::string to_string(GuidanceFamily family) {
  switch (family) {
    case GuidanceFamily::kSampleCurrent: return "sample-current";
    case GuidanceFamily::kSampleDestination: return "sample-destination";
    case GuidanceFamily::kGradient: return "gradient";
  }
  return "?";
}

ValueKind GuidanceConfig::paired_value() const {
  const ValueKind paired = family == GuidanceFamily::kSampleDestination
                               ? ValueKind::kDestination
                               : ValueKind::kCurrent;
  if (value_kind != ValueKind::kAuto && value_kind != paired)
    throw std::invalid_argument(
        "invalid-configuration: value function does not pair with branch-out family " +
        to_string(family));
  return paired;
}

void GuidanceConfig::validate() const {
  if (branch_size < 1) throw std::invalid_argument("invalid-configuration: K must be >= 1");
  if (mc_samples < 1) throw std::invalid_argument("invalid-configuration: N must be >= 1");
  if (dest_iterations < 1)
    throw std::invalid_argument("invalid-configuration: N_iter must be >= 1");
  if (!(tau > 0.0)) throw std::invalid_argument("invalid-configuration: tau must be > 0");
  if (rho_scale < 0.0) throw std::invalid_argument("invalid-configuration: rho scale must be >= 0");
  if (window_start > window_end)
    throw std::invalid_argument("invalid-configuration: guidance window start exceeds end");
  if (window_start < 0.0 || window_end > 1.0)
    throw std::invalid_argument("invalid-configuration: guidance window must lie in [0, 1]");
  paired_value();
}

const TabularDenoiser& DiscreteCore::tabular() const {
  const auto* p = dynamic_cast<const TabularDenoiser*>(denoiser.get());
  if (p == nullptr)
    throw std::invalid_argument("operation requires the enumerable tabular denoiser");
  return *p;
}

double destination_step_size(double rho_scale, double sigma_t) {
  return rho_scale * sigma_t / std::sqrt(1.0 + sigma_t * sigma_t);
}

// ------------------------- current-state pair ------------------------------

ContinuousCandidate branch_out_current(const ContinuousState& x, const ContinuousCore& core,
                                       RngStream& rng, CostCounters* counters) {
  if (counters) counters->model_calls += 1;
  ContinuousCandidate cand;
  cand.next = ddpm_step(x, *core.denoiser, *core.schedule, rng);
  return cand;
}

DiscreteCandidate branch_out_current(const DiscreteSequence& x, const DiscreteCore& core,
                                     RngStream& rng, CostCounters* counters) {
  if (counters) counters->model_calls += 1;
  const RateSpec rates = model_rate(x, *core.denoiser, x.t);
  DiscreteCandidate cand;
  cand.next = euler_step(x, rates, core.dt(), rng);
  return cand;
}

double value_current(const ContinuousState& x, const ContinuousCore& core,
                     const ContinuousObjective& objective, RngStream&,
                     CostCounters* counters) {
  if (counters) {
    counters->model_calls += 1;
    counters->pred_calls += 1;
  }
  const auto xhat = core.denoiser->predict_x1(x.x, x.t);
  return objective.evaluate(xhat);
}

std::vector<int> draw_x1(const RowMatrix& prediction, RngStream& rng) {
  std::vector<int> tokens(static_cast<std::size_t>(prediction.rows));
  for (int d = 0; d < prediction.rows; ++d)
    tokens[static_cast<std::size_t>(d)] =
        rng.categorical(std::span<const double>(prediction.row(d), static_cast<std::size_t>(prediction.cols)));
  return tokens;
}

namespace {

double mc_value_from_prediction(const RowMatrix& prediction, const DiscreteObjective& objective,
                                int n_samples, RngStream& rng, CostCounters* counters) {
  if (n_samples < 1) throw std::invalid_argument("mc_log_py: N must be >= 1");
  if (counters) counters->pred_calls += static_cast<std::uint64_t>(n_samples);
  double acc = 0.0;
  for (int i = 0; i < n_samples; ++i) acc += objective.evaluate(draw_x1(prediction, rng));
  return acc / n_samples;
}

}  // namespace

double value_current(const DiscreteSequence& x, const DiscreteCore& core,
                     const DiscreteObjective& objective, int n_samples, RngStream& rng,
                     CostCounters* counters) {
  if (counters) counters->model_calls += 1;
  const RowMatrix prediction = core.denoiser->predict(x);
  return mc_value_from_prediction(prediction, objective, n_samples, rng, counters);
}

double mc_log_py(const DiscreteSequence& x, const DiscreteCore& core,
                 const DiscreteObjective& objective, int n_samples, RngStream& rng,
                 CostCounters* counters) {
  return value_current(x, core, objective, n_samples, rng, counters);
}

double enumerated_log_py(const RowMatrix& prediction, const DiscreteObjective& objective) {
  const int dim = prediction.rows;
  const int n_states = prediction.cols;
  std::int64_t size = 1;
  for (int d = 0; d < dim; ++d) size *= n_states;
  std::vector<int> tokens(static_cast<std::size_t>(dim));
  double acc = 0.0;
  for (std::int64_t idx = 0; idx < size; ++idx) {
    std::int64_t rem = idx;
    double w = 1.0;
    for (int d = 0; d < dim; ++d) {
      const int tok = static_cast<int>(rem % n_states);
      rem /= n_states;
      tokens[static_cast<std::size_t>(d)] = tok;
      w *= prediction(d, tok);
    }
    if (w == 0.0) continue;
    acc += w * objective.evaluate(tokens);
  }
  return acc;
}

// ----------------------- destination-state pair ----------------------------

ContinuousCandidate branch_out_destination_continuous(const ContinuousState& x,
                                                      const ContinuousCore& core,
                                                      const ContinuousObjective& objective,
                                                      const GuidanceConfig& config, RngStream& rng,
                                                      CostCounters* counters) {
  const StepCoeffs coeffs = step_coeffs(*core.schedule, x.t);
  if (counters) counters->model_calls += 1;
  const auto xhat = core.denoiser->predict_x1(x.x, x.t);
  const double rho = destination_step_size(config.rho_scale, coeffs.sigma);
  const std::size_t dim = x.x.size();

  // Iterated keep-best refinement around the point estimate. The first draw
  // of the first round is the unperturbed center, so the kept value can never
  // fall below f_y(xhat) and the evaluation count is exactly K * N_iter.
  std::vector<double> kept = xhat;
  double kept_value = -std::numeric_limits<double>::infinity();
  std::vector<double> trial(dim);
  for (int round = 0; round < config.dest_iterations; ++round) {
    std::vector<double> center = kept;
    for (int i = 0; i < config.branch_size; ++i) {
      const bool is_center = (round == 0 && i == 0);
      for (std::size_t j = 0; j < dim; ++j)
        trial[j] = is_center ? center[j] : center[j] + rho * rng.normal();
      if (counters) counters->pred_calls += 1;
      const double v = objective.evaluate(trial);
      if (v > kept_value) {
        kept_value = v;
        kept = trial;
      }
    }
  }

  const int step_index = core.schedule->index_of(x.t);
  ContinuousCandidate cand;
  cand.value = kept_value;
  cand.destination = kept;
  cand.next.t = core.schedule->time(step_index + 1);
  cand.next.x.resize(dim);

  if (config.dsg) {
    double norm_sq = 0.0;
    for (std::size_t j = 0; j < dim; ++j) {
      const double d = kept[j] - xhat[j];
      norm_sq += d * d;
    }
    if (norm_sq > 0.0) {
      const double scale = std::sqrt(static_cast<double>(dim)) / std::sqrt(norm_sq);
      for (std::size_t j = 0; j < dim; ++j)
        cand.next.x[j] = coeffs.c1 * x.x[j] + coeffs.c2 * xhat[j] +
                         coeffs.sigma * scale * (kept[j] - xhat[j]);
      return cand;
    }
    // Zero selected direction: fall back to the plain noise draw below.
  }
  for (std::size_t j = 0; j < dim; ++j)
    cand.next.x[j] = coeffs.c1 * x.x[j] + coeffs.c2 * kept[j] + coeffs.sigma * rng.normal();
  return cand;
}

DiscreteCandidate branch_out_destination_discrete(const DiscreteSequence& x,
                                                  const DiscreteCore& core,
                                                  const DiscreteObjective& objective,
                                                  RngStream& rng, CostCounters* counters) {
  if (x.t >= 1.0) throw std::invalid_argument("branch_out_destination: no step leaves t = 1");
  if (counters) counters->model_calls += 1;
  const RowMatrix prediction = core.denoiser->predict(x);
  const std::vector<int> destination = draw_x1(prediction, rng);

  // Destination-conditioned rates: masked dimensions move only toward the
  // drawn destination token.
  RateSpec rates;
  rates.dim = core.dim;
  rates.n_states = core.n_states;
  rates.rows.resize(static_cast<std::size_t>(core.dim));
  const double inv = 1.0 / (1.0 - x.t);
  for (int d = 0; d < core.dim; ++d) {
    if (x.tokens[static_cast<std::size_t>(d)] != kMaskToken) continue;
    auto& row = rates.rows[static_cast<std::size_t>(d)];
    row.assign(static_cast<std::size_t>(core.n_states), 0.0);
    row[static_cast<std::size_t>(destination[static_cast<std::size_t>(d)])] = inv;
  }

  DiscreteCandidate cand;
  cand.next = euler_step(x, rates, core.dt(), rng);
  cand.destination = destination;
  if (counters) counters->pred_calls += 1;
  cand.value = objective.evaluate(destination);
  return cand;
}

// --------------------------- gradient family -------------------------------

std::vector<double> gumbel_softmax(std::span<const double> logits,
                                   std::span<const double> gumbels, double tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("gumbel_softmax: tau must be > 0");
  std::vector<double> out(logits.size());
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t s = 0; s < logits.size(); ++s) {
    out[s] = (logits[s] + gumbels[s]) / tau;
    m = std::max(m, out[s]);
  }
  double z = 0.0;
  for (double& v : out) {
    v = std::exp(v - m);
    z += v;
  }
  for (double& v : out) v /= z;
  return out;
}

namespace {

int column_of(int token, int n_states) { return token == kMaskToken ? n_states : token; }

}  // namespace

RowMatrix st_gumbel_gradient_from(const DiscreteSequence& x, const NeighborPosteriors& nb,
                                  const OnehotPredictor& predictor, int n_samples, double tau,
                                  RngStream& rng, CostCounters* counters) {
  if (!(tau > 0.0)) throw std::invalid_argument("st_gumbel_gradient: tau must be > 0");
  if (n_samples < 1) throw std::invalid_argument("st_gumbel_gradient: N must be >= 1");
  const int dim = nb.dim;
  const int n_states = nb.n_states;

  std::vector<double> logits(static_cast<std::size_t>(dim) * static_cast<std::size_t>(n_states));
  for (int d = 0; d < dim; ++d)
    for (int s = 0; s < n_states; ++s)
      logits[static_cast<std::size_t>(d) * n_states + s] = std::log(std::max(nb.base(d, s), kLogFloor));

  // Accumulated gradient with respect to the denoiser output rows.
  RowMatrix d_pred(dim, n_states, 0.0);
  RowMatrix hard(dim, n_states, 0.0);
  std::vector<double> gumbels(static_cast<std::size_t>(n_states));
  std::vector<int> hard_tok(static_cast<std::size_t>(dim));

  // Per-dimension log normalizer of the logits (rows are normalized up to
  // the clamping of zero entries).
  std::vector<double> logz(static_cast<std::size_t>(dim), 0.0);
  for (int d = 0; d < dim; ++d) {
    double z = 0.0;
    for (int s = 0; s < n_states; ++s) z += std::exp(logits[static_cast<std::size_t>(d) * n_states + s]);
    logz[static_cast<std::size_t>(d)] = std::log(z);
  }

  // Inner conditional-Gumbel draws per hard sample: the softmax Jacobian is
  // averaged over Gumbel noise conditioned on the realized argmax, which
  // keeps the estimator's mean and cuts the contested-argmax variance.
  constexpr int kInnerDraws = 16;

  for (int i = 0; i < n_samples; ++i) {
    for (double& v : hard.data) v = 0.0;
    for (int d = 0; d < dim; ++d) {
      const int k = rng.categorical(std::span<const double>(
          nb.base.row(d), static_cast<std::size_t>(n_states)));
      hard_tok[static_cast<std::size_t>(d)] = k;
      hard(d, k) = 1.0;
    }
    // Straight-through: the predictor gradient at the hard sample is copied
    // onto the tempered softmax, then chained through softmax and log.
    const RowMatrix r = predictor.gradient(hard);
    for (int d = 0; d < dim; ++d) {
      const double* lrow = logits.data() + static_cast<std::size_t>(d) * n_states;
      const int k = hard_tok[static_cast<std::size_t>(d)];
      for (int m = 0; m < kInnerDraws; ++m) {
        // Top-down conditional Gumbels: the maximum sits at k, the rest are
        // truncated below it.
        const double top = logz[static_cast<std::size_t>(d)] - std::log(-std::log(rng.uniform_pos()));
        for (int s = 0; s < n_states; ++s) {
          if (s == k) {
            gumbels[static_cast<std::size_t>(s)] = top - lrow[s];
            continue;
          }
          const double neg_log_u = -std::log(rng.uniform_pos());
          gumbels[static_cast<std::size_t>(s)] =
              -std::log(std::exp(lrow[s] - top) + neg_log_u);
        }
        const auto soft = gumbel_softmax(
            std::span<const double>(lrow, static_cast<std::size_t>(n_states)), gumbels, tau);
        double dot = 0.0;
        for (int s = 0; s < n_states; ++s) dot += r(d, s) * soft[static_cast<std::size_t>(s)];
        for (int s = 0; s < n_states; ++s) {
          const double d_logit = soft[static_cast<std::size_t>(s)] * (r(d, s) - dot) / tau;
          d_pred(d, s) +=
              d_logit / std::max(nb.base(d, s), kLogFloor) / (n_samples * kInnerDraws);
        }
      }
    }
  }
  if (counters) counters->backprop_calls += 1;

  // Chain through the multilinear extension of the tabular denoiser: the
  // derivative along the (d, col) vertex is the posterior at the edited
  // sequence, so the vjp is an inner product with each neighbor posterior.
  const int cols = n_states + 1;
  RowMatrix raw(dim, cols, 0.0);
  for (int d = 0; d < dim; ++d) {
    for (int col = 0; col < cols; ++col) {
      if (!nb.valid(d, col)) continue;
      const RowMatrix& post = nb.at(d, col);
      double acc = 0.0;
      for (std::size_t i = 0; i < post.data.size(); ++i) acc += d_pred.data[i] * post.data[i];
      raw(d, col) = acc;
    }
  }
  // Center on the current state's column: entries become displacement
  // directional derivatives and the centered array is its own Taylor ratio.
  RowMatrix out(dim, cols, 0.0);
  for (int d = 0; d < dim; ++d) {
    const double base = raw(d, column_of(x.tokens[static_cast<std::size_t>(d)], n_states));
    for (int col = 0; col < cols; ++col)
      out(d, col) = nb.valid(d, col) ? raw(d, col) - base : 0.0;
  }
  return out;
}

RowMatrix st_gumbel_gradient(const DiscreteSequence& x, const DiscreteCore& core,
                             const OnehotPredictor& predictor, int n_samples, double tau,
                             RngStream& rng, CostCounters* counters) {
  const NeighborPosteriors nb = core.tabular().neighbor_posteriors(x);
  return st_gumbel_gradient_from(x, nb, predictor, n_samples, tau, rng, counters);
}

RowMatrix expected_value_gradient(const DiscreteSequence& x, const NeighborPosteriors& nb,
                                  const DiscreteObjective& objective) {
  const int cols = nb.n_states + 1;
  RowMatrix raw(nb.dim, cols, 0.0);
  for (int d = 0; d < nb.dim; ++d)
    for (int col = 0; col < cols; ++col)
      if (nb.valid(d, col)) raw(d, col) = enumerated_log_py(nb.at(d, col), objective);
  RowMatrix out(nb.dim, cols, 0.0);
  for (int d = 0; d < nb.dim; ++d) {
    const double base = raw(d, column_of(x.tokens[static_cast<std::size_t>(d)], nb.n_states));
    for (int col = 0; col < cols; ++col)
      out(d, col) = nb.valid(d, col) ? raw(d, col) - base : 0.0;
  }
  return out;
}

RowMatrix taylor_ratios(const DiscreteSequence& x, const RowMatrix& grad) {
  const int n_states = grad.cols - 1;
  RowMatrix out(grad.rows, n_states, 0.0);
  for (int d = 0; d < grad.rows; ++d) {
    const double base = grad(d, column_of(x.tokens[static_cast<std::size_t>(d)], n_states));
    for (int j = 0; j < n_states; ++j) out(d, j) = grad(d, j) - base;
  }
  return out;
}

RowMatrix exact_ratios(const DiscreteSequence& x, const DiscreteCore& core,
                       const DiscreteObjective& objective, int n_samples, RngStream& rng,
                       CostCounters* counters) {
  const NeighborPosteriors nb = core.tabular().neighbor_posteriors(x);
  return exact_ratios_from(x, nb, objective, n_samples, rng, counters);
}

RowMatrix exact_ratios_from(const DiscreteSequence& x, const NeighborPosteriors& nb,
                            const DiscreteObjective& objective, int n_samples, RngStream& rng,
                            CostCounters* counters) {
  (void)x;
  const int dim = nb.dim;
  const int n_states = nb.n_states;
  RowMatrix out(dim, n_states, 0.0);

  if (n_samples == 0) {
    const double base = enumerated_log_py(nb.base, objective);
    for (int d = 0; d < dim; ++d)
      for (int j = 0; j < n_states; ++j)
        out(d, j) = nb.valid(d, j) ? enumerated_log_py(nb.at(d, j), objective) - base : 0.0;
    return out;
  }

  // Common random numbers: one uniform per (sample, dimension), shared by the
  // base state and every neighbor, so identical posteriors produce identical
  // draws and the noise cancels in the difference.
  std::vector<double> uniforms(static_cast<std::size_t>(n_samples) * static_cast<std::size_t>(dim));
  for (double& u : uniforms) u = rng.uniform();

  const auto value_of = [&](const RowMatrix& post) {
    double acc = 0.0;
    std::vector<int> tokens(static_cast<std::size_t>(dim));
    for (int i = 0; i < n_samples; ++i) {
      for (int e = 0; e < dim; ++e) {
        const double u = uniforms[static_cast<std::size_t>(i) * dim + e];
        double cum = 0.0;
        int pick = n_states - 1;
        for (int s = 0; s < n_states; ++s) {
          cum += post(e, s);
          if (u < cum) {
            pick = s;
            break;
          }
        }
        tokens[static_cast<std::size_t>(e)] = pick;
      }
      acc += objective.evaluate(tokens);
    }
    return acc / n_samples;
  };

  if (counters)
    counters->pred_calls +=
        static_cast<std::uint64_t>(n_samples) * (static_cast<std::uint64_t>(dim) * n_states + 1);
  const double base = value_of(nb.base);
  for (int d = 0; d < dim; ++d)
    for (int j = 0; j < n_states; ++j)
      out(d, j) = nb.valid(d, j) ? value_of(nb.at(d, j)) - base : 0.0;
  return out;
}

RateSpec guided_rate(const RateSpec& rates, const RowMatrix& ratios, double gamma) {
  rates.validate();
  RateSpec out = rates;
  for (int d = 0; d < rates.dim; ++d) {
    auto& row = out.rows[static_cast<std::size_t>(d)];
    if (row.empty()) continue;
    for (int j = 0; j < rates.n_states; ++j) {
      if (row[static_cast<std::size_t>(j)] == 0.0) continue;  // structural zero stays zero
      const double e = std::clamp(gamma * ratios(d, j), -kExpClip, kExpClip);
      row[static_cast<std::size_t>(j)] *= std::exp(e);
    }
  }
  return out;
}

ContinuousCandidate gradient_step_continuous(const ContinuousState& x, const ContinuousCore& core,
                                             const ContinuousPredictor& predictor, double gamma,
                                             RngStream& rng, CostCounters* counters) {
  const StepCoeffs coeffs = step_coeffs(*core.schedule, x.t);
  const auto xhat = core.denoiser->predict_x1(x.x, x.t);

  std::vector<double> grad;
  if (core.denoiser->has_vjp()) {
    grad = core.denoiser->vjp(x.x, x.t, predictor.gradient(xhat));
  } else {
    double norm = 0.0;
    for (double v : x.x) norm += v * v;
    const double step = 1e-5 * std::sqrt(norm) + 1e-8;
    grad = central_difference_gradient(
        [&](std::span<const double> p) { return predictor.evaluate(core.denoiser->predict_x1(p, x.t)); },
        x.x, step);
  }
  if (counters) counters->backprop_calls += 1;

  const int step_index = core.schedule->index_of(x.t);
  ContinuousCandidate cand;
  cand.next.t = core.schedule->time(step_index + 1);
  cand.next.x.resize(x.x.size());
  for (std::size_t j = 0; j < x.x.size(); ++j)
    cand.next.x[j] =
        gamma * grad[j] + coeffs.c1 * x.x[j] + coeffs.c2 * xhat[j] + coeffs.sigma * rng.normal();
  return cand;
}

}  // namespace treeg
