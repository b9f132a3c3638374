#include "treeg/verify.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <ostream>

#include "treeg/guidance.hpp"
#include "treeg/search.hpp"

namespace treeg {

namespace {

// ---------------------------------------------------------------------------
// Oracle: composite Simpson quadrature, independent of the closed forms under
// test. The caller supplies a range covering the integrand's support; the
// node count keeps the h^4 error orders of magnitude below the tolerances.
double integrate(const std::function<double(double)>& f, double a, double b, int panels = 16384) {
  const double h = (b - a) / (2 * panels);
  double acc = f(a) + f(b);
  for (int i = 1; i < 2 * panels; ++i) acc += f(a + h * i) * ((i % 2) ? 4.0 : 2.0);
  return acc * h / 3.0;
}

double normal_pdf(double x, double mean, double variance) {
  const double d = x - mean;
  return std::exp(-0.5 * d * d / variance) / std::sqrt(2.0 * 3.141592653589793238462643383279 * variance);
}

CheckResult make_check(std::string name, double measured, double tolerance,
                       bool informational = false, std::string note = {}) {
  CheckResult c;
  c.name = std::move(name);
  c.measured = measured;
  c.tolerance = tolerance;
  c.pass = informational || measured <= tolerance;
  c.informational = informational;
  c.note = std::move(note);
  return c;
}

double schedule_identity_error(const NoiseSchedule& schedule) {
  double max_err = 0.0;
  for (int i = 0; i < schedule.steps(); ++i) {
    const StepCoeffs c = schedule.coeffs(i);
    const double lhs = c.c1 * std::sqrt(schedule.alpha_bar(i)) + c.c2;
    const double rhs = std::sqrt(schedule.alpha_bar(i + 1));
    max_err = std::max(max_err, std::abs(lhs - rhs) / rhs);
  }
  return max_err;
}

double schedule_beta_bound_violation(const NoiseSchedule& schedule) {
  double worst = -1.0;
  for (int i = 0; i < schedule.steps(); ++i) {
    const StepCoeffs c = schedule.coeffs(i);
    worst = std::max(worst, c.beta - (1.0 - c.alpha));
  }
  return std::max(worst, 0.0);
}

TabularDistribution random_table(int dim, int n_states, std::uint64_t seed) {
  RngStream rng(seed);
  std::int64_t size = 1;
  for (int d = 0; d < dim; ++d) size *= n_states;
  std::vector<double> probs(static_cast<std::size_t>(size));
  double sum = 0.0;
  for (double& p : probs) {
    p = 0.05 + rng.uniform();  // bounded away from zero: full support
    sum += p;
  }
  for (double& p : probs) p /= sum;
  return TabularDistribution(dim, n_states, std::move(probs));
}

// All mask/token patterns over D dimensions (S tokens plus the mask).
std::vector<std::vector<int>> all_patterns(int dim, int n_states) {
  std::vector<std::vector<int>> out;
  std::vector<int> cur(static_cast<std::size_t>(dim), kMaskToken);
  const int base = n_states + 1;
  std::int64_t total = 1;
  for (int d = 0; d < dim; ++d) total *= base;
  for (std::int64_t idx = 0; idx < total; ++idx) {
    std::int64_t rem = idx;
    for (int d = 0; d < dim; ++d) {
      const int v = static_cast<int>(rem % base);
      rem /= base;
      cur[static_cast<std::size_t>(d)] = v == n_states ? kMaskToken : v;
    }
    out.push_back(cur);
  }
  return out;
}

}  // namespace

std::vector<CheckResult> run_verification_suite(std::uint64_t seed) {
  std::vector<CheckResult> results;

  // --- schedule identities -------------------------------------------------
  {
    const auto linear = build_schedule(ScheduleKind::kLinearAlphaBar, 1000);
    const auto cosine = build_schedule(ScheduleKind::kCosine, 1000);
    results.push_back(make_check("schedule/mean-consistency-linear-T1000",
                                 schedule_identity_error(linear), 1e-12));
    results.push_back(make_check("schedule/mean-consistency-cosine-T1000",
                                 schedule_identity_error(cosine), 1e-12));
    results.push_back(make_check("schedule/posterior-variance-bound",
                                 std::max(schedule_beta_bound_violation(linear),
                                          schedule_beta_bound_violation(cosine)),
                                 0.0));
  }
  {
    RngStream rng(seed + 11);
    double max_err = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
      double a = rng.uniform_pos();
      double b = rng.uniform_pos();
      if (a > b) std::swap(a, b);
      if (a == b) continue;
      const StepCoeffs c = step_coeffs_from_alpha_bars(a, b);
      max_err = std::max(max_err, std::abs(c.c1 * std::sqrt(a) + c.c2 - std::sqrt(b)) / std::sqrt(b));
    }
    results.push_back(make_check("schedule/mean-consistency-random-pairs", max_err, 1e-12));
  }

  // --- denoiser vs quadrature ---------------------------------------------
  {
    GaussianMixture gmm;
    gmm.weights = {0.3, 0.7};
    gmm.means = {{-1.2}, {2.0}};
    gmm.variances = {{0.5}, {1.5}};
    double max_err = 0.0;
    for (const double ab : {0.15, 0.6, 0.95}) {
      for (const double xt : {-2.0, 0.8, 3.1}) {
        const auto closed = gmm_posterior_mean(std::vector<double>{xt}, ab, gmm);
        const auto density = [&](double x1) {
          double g = 0.0;
          for (int k = 0; k < 2; ++k)
            g += gmm.weights[static_cast<std::size_t>(k)] *
                 normal_pdf(x1, gmm.means[static_cast<std::size_t>(k)][0],
                            gmm.variances[static_cast<std::size_t>(k)][0]);
          return g * normal_pdf(xt, std::sqrt(ab) * x1, 1.0 - ab);
        };
        // Range covering both the data components and the likelihood spike.
        const double lik_center = xt / std::sqrt(ab);
        const double lik_width = std::sqrt((1.0 - ab) / ab);
        const double lo = std::min(-1.2 - 12.0 * std::sqrt(0.5), lik_center - 12.0 * lik_width);
        const double hi = std::max(2.0 + 12.0 * std::sqrt(1.5), lik_center + 12.0 * lik_width);
        const double num = integrate([&](double x) { return x * density(x); }, lo, hi);
        const double den = integrate(density, lo, hi);
        max_err = std::max(max_err, std::abs(closed[0] - num / den));
      }
    }
    results.push_back(make_check("continuous/posterior-mean-vs-quadrature", max_err, 1e-6));
  }

  // --- two-stage sampler: mean identity and endpoint-variance gap ----------
  {
    const auto schedule = build_schedule(ScheduleKind::kLinearAlphaBar, 50);
    const double x = -1.3;
    const double u = 0.4;  // stands in for the denoiser prediction
    double max_mean_err = 0.0;
    double max_var_gap = 0.0;
    for (int i = 0; i < schedule.steps(); ++i) {
      const StepCoeffs c = schedule.coeffs(i);
      const double spread = std::sqrt(std::max(1.0 - c.alpha, 1e-30));
      // Marginalize the endpoint-conditioned step over xhat ~ N(u, 1 - alpha)
      // numerically (trapezoid over +-10 sd; exponentially accurate here).
      const int nodes = 4001;
      const double lo = u - 10.0 * spread, hi = u + 10.0 * spread;
      const double h = (hi - lo) / (nodes - 1);
      double mass = 0.0, mean = 0.0, second = 0.0;
      for (int n = 0; n < nodes; ++n) {
        const double xhat = lo + h * n;
        const double w = normal_pdf(xhat, u, std::max(1.0 - c.alpha, 1e-30)) *
                         ((n == 0 || n == nodes - 1) ? 0.5 : 1.0);
        const double m = c.c1 * x + c.c2 * xhat;  // mean of the conditioned step
        mass += w;
        mean += w * m;
        second += w * (m * m + c.beta);
      }
      mean /= mass;
      second /= mass;
      const double direct_mean = c.c1 * x + c.c2 * u;
      max_mean_err = std::max(max_mean_err, std::abs(mean - direct_mean));
      const double composite_var = second - mean * mean;
      const double step_var = 1.0 - c.alpha;
      if (step_var > 1e-12)
        max_var_gap = std::max(max_var_gap, std::abs(composite_var - step_var) / step_var);
    }
    results.push_back(make_check("continuous/two-stage-mean-identity", max_mean_err, 1e-12));
    results.push_back(make_check("continuous/two-stage-variance-gap", max_var_gap, 0.0, true,
                                 "relative gap between the marginalized endpoint-conditioned "
                                 "variance and the single-step variance; vanishes as dt -> 0"));
  }

  // --- rate-matrix marginalization ------------------------------------------
  {
    const auto table = random_table(3, 4, seed + 23);
    const TabularDenoiser denoiser(table);
    double max_err = 0.0;
    for (const auto& pattern : all_patterns(3, 4)) {
      const DiscreteSequence x{pattern, 0.0};
      for (const double t : {0.1, 0.5, 0.9}) {
        const DiscreteSequence xt{pattern, t};
        const RateSpec rates = model_rate(xt, denoiser, t);
        // Brute force: expectation of the endpoint-conditioned rate over the
        // restricted table, computed directly from the table.
        std::vector<int> y(3);
        for (int d = 0; d < 3; ++d) {
          if (pattern[static_cast<std::size_t>(d)] != kMaskToken) {
            if (!rates.rows[static_cast<std::size_t>(d)].empty())
              max_err = std::max(max_err, 1.0);  // unmasked rows must be empty
            continue;
          }
          for (int j = 0; j < 4; ++j) {
            double num = 0.0, den = 0.0;
            for (std::size_t idx = 0; idx < table.probs().size(); ++idx) {
              table.decode(idx, y);
              bool consistent = true;
              for (int e = 0; e < 3; ++e) {
                const int obs = pattern[static_cast<std::size_t>(e)];
                if (obs != kMaskToken && obs != y[static_cast<std::size_t>(e)]) {
                  consistent = false;
                  break;
                }
              }
              if (!consistent) continue;
              const double p = table.probs()[idx];
              den += p;
              num += p * conditional_rate(kMaskToken, j, y[static_cast<std::size_t>(d)], t);
            }
            const double brute = num / den;
            max_err = std::max(max_err, std::abs(brute - rates.rows[static_cast<std::size_t>(d)]
                                                             [static_cast<std::size_t>(j)]));
          }
        }
      }
    }
    results.push_back(make_check("discrete/rate-marginalization-D3S4", max_err, 1e-12));
  }

  // --- destination marginalization reproduces the one-step law --------------
  {
    const auto table = random_table(2, 3, seed + 31);
    const TabularDenoiser denoiser(table);
    const int T = 8;
    const double dt = 1.0 / T;
    double max_err = 0.0;
    for (const auto& pattern : all_patterns(2, 3)) {
      for (const double t : {2.0 / T, 4.0 / T}) {
        const DiscreteSequence xt{pattern, t};
        const RowMatrix u = denoiser.predict(xt);

        // Enumerate next states over ([S] u {M})^2 for both routes.
        const auto patterns = all_patterns(2, 3);
        std::vector<double> law_direct(patterns.size(), 0.0);
        std::vector<double> law_marginal(patterns.size(), 0.0);

        // Route 1: one Euler step under the model rate.
        const RateSpec rates = model_rate(xt, denoiser, t);
        for (std::size_t pi = 0; pi < patterns.size(); ++pi) {
          double prob = 1.0;
          for (int d = 0; d < 2; ++d) {
            const int cur = pattern[static_cast<std::size_t>(d)];
            const int nxt = patterns[pi][static_cast<std::size_t>(d)];
            if (cur != kMaskToken) {
              prob *= (nxt == cur) ? 1.0 : 0.0;
              continue;
            }
            const auto& row = rates.rows[static_cast<std::size_t>(d)];
            const auto jp = euler_jump_probs(row, dt);
            if (nxt == kMaskToken)
              prob *= jp.back();
            else
              prob *= jp[static_cast<std::size_t>(nxt)];
          }
          law_direct[pi] = prob;
        }

        // Route 2: expectation over full destination draws of the
        // destination-conditioned transition.
        for (int a = 0; a < 3; ++a) {
          for (int b = 0; b < 3; ++b) {
            const double w = u(0, a) * u(1, b);
            if (w == 0.0) continue;
            const int dest[2] = {a, b};
            for (std::size_t pi = 0; pi < patterns.size(); ++pi) {
              double prob = 1.0;
              for (int d = 0; d < 2; ++d) {
                const int cur = pattern[static_cast<std::size_t>(d)];
                const int nxt = patterns[pi][static_cast<std::size_t>(d)];
                if (cur != kMaskToken) {
                  prob *= (nxt == cur) ? 1.0 : 0.0;
                  continue;
                }
                const double jump = std::min(dt / (1.0 - t), 1.0);
                if (nxt == kMaskToken)
                  prob *= 1.0 - jump;
                else if (nxt == dest[d])
                  prob *= jump;
                else
                  prob = 0.0;
              }
              law_marginal[pi] += w * prob;
            }
          }
        }

        for (std::size_t pi = 0; pi < patterns.size(); ++pi)
          max_err = std::max(max_err, std::abs(law_direct[pi] - law_marginal[pi]));
      }
    }
    results.push_back(make_check("discrete/destination-marginalization-D2S3", max_err, 1e-12));
  }

  // --- Euler jump distribution normalization --------------------------------
  {
    RngStream rng(seed + 41);
    double max_err = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
      std::vector<double> rates(4);
      for (double& r : rates) r = 3.0 * rng.uniform();
      for (const double dt : {0.05, 0.5, 10.0}) {  // includes the clamped regime
        const auto probs = euler_jump_probs(rates, dt);
        double sum = 0.0;
        for (double p : probs) sum += p;
        max_err = std::max(max_err, std::abs(sum - 1.0));
      }
    }
    results.push_back(make_check("discrete/euler-jump-normalization", max_err, 1e-15));
  }

  // --- guided rate with zero strength is the identity ------------------------
  {
    const auto table = random_table(3, 4, seed + 47);
    const TabularDenoiser denoiser(table);
    const DiscreteSequence xt{{kMaskToken, 1, kMaskToken}, 0.5};
    const RateSpec rates = model_rate(xt, denoiser, 0.5);
    RngStream rng(seed + 48);
    RowMatrix ratios(3, 4);
    for (double& v : ratios.data) v = rng.normal();
    const RateSpec tilted = guided_rate(rates, ratios, 0.0);
    double max_err = 0.0;
    for (int d = 0; d < 3; ++d) {
      const auto& a = rates.rows[static_cast<std::size_t>(d)];
      const auto& b = tilted.rows[static_cast<std::size_t>(d)];
      if (a.size() != b.size()) max_err = std::max(max_err, 1.0);
      for (std::size_t j = 0; j < a.size(); ++j) max_err = std::max(max_err, std::abs(a[j] - b[j]));
    }
    results.push_back(make_check("guidance/zero-strength-rate-identity", max_err, 0.0));
  }

  // --- Taylor ratios equal direct ratios for a linear predictor -------------
  {
    const auto table = random_table(3, 3, seed + 53);
    const TabularDenoiser denoiser(table);
    const DiscreteCore core{8, std::make_shared<TabularDenoiser>(table), 3, 3};
    RngStream wrng(seed + 54);
    RowMatrix w(3, 3);
    for (double& v : w.data) v = wrng.normal();
    const LinearOnehotPredictor predictor(w);
    struct AsObjective final : DiscreteObjective {
      const LinearOnehotPredictor* p;
      double evaluate(const std::vector<int>& tokens) const override {
        return p->evaluate_tokens(tokens, 3);
      }
    };
    AsObjective objective;
    objective.p = &predictor;

    double max_gap = 0.0;
    for (const auto& pattern : all_patterns(3, 3)) {
      const DiscreteSequence xt{pattern, 0.5};
      const NeighborPosteriors nb = denoiser.neighbor_posteriors(xt);
      const RowMatrix grad = expected_value_gradient(xt, nb, objective);
      const RowMatrix taylor = taylor_ratios(xt, grad);
      // Independent route: direct restriction posteriors per edited sequence.
      const double base_v = enumerated_log_py(tabular_posterior(xt, table), objective);
      for (int d = 0; d < 3; ++d) {
        if (pattern[static_cast<std::size_t>(d)] != kMaskToken) continue;
        for (int j = 0; j < 3; ++j) {
          DiscreteSequence edited = xt;
          edited.tokens[static_cast<std::size_t>(d)] = j;
          const double v = enumerated_log_py(tabular_posterior(edited, table), objective);
          max_gap = std::max(max_gap, std::abs(taylor(d, j) - (v - base_v)));
        }
      }
    }
    results.push_back(make_check("guidance/taylor-equals-exact-linear", max_gap, 1e-10));
  }

  // --- straight-through estimator against the closed form -------------------
  {
    const auto table = random_table(3, 3, seed + 59);
    const TabularDenoiser denoiser(table);
    RngStream wrng(seed + 60);
    RowMatrix w(3, 3);
    for (double& v : w.data) v = wrng.normal();
    const LinearOnehotPredictor predictor(w);
    struct AsObjective final : DiscreteObjective {
      const LinearOnehotPredictor* p;
      double evaluate(const std::vector<int>& tokens) const override {
        return p->evaluate_tokens(tokens, 3);
      }
    };
    AsObjective objective;
    objective.p = &predictor;

    const DiscreteSequence xt{{kMaskToken, 2, kMaskToken}, 0.4};
    const NeighborPosteriors nb = denoiser.neighbor_posteriors(xt);
    const RowMatrix oracle = expected_value_gradient(xt, nb, objective);
    auto rng = derive_stream(seed + 61, stream_purpose::kGumbel);
    const RowMatrix est = st_gumbel_gradient_from(xt, nb, predictor, 1024, 0.15, rng, nullptr);
    // Compare over the entries the guided rates consume: masked dimensions.
    // Unmasked dimensions never move, and their saturated point-mass rows
    // carry no gradient signal through the tempered softmax.
    double num = 0.0, den = 0.0;
    for (int d = 0; d < 3; ++d) {
      if (xt.tokens[static_cast<std::size_t>(d)] != kMaskToken) continue;
      for (int c = 0; c < 4; ++c) {
        num += (est(d, c) - oracle(d, c)) * (est(d, c) - oracle(d, c));
        den += oracle(d, c) * oracle(d, c);
      }
    }
    results.push_back(
        make_check("guidance/st-gumbel-vs-closed-form-N1024", std::sqrt(num / den), 0.05));
  }

  // --- destination refinement never falls below the point estimate ----------
  {
    const auto schedule = build_schedule(ScheduleKind::kLinearAlphaBar, 20);
    GaussianMixture gmm;
    gmm.weights = {0.5, 0.5};
    gmm.means = {std::vector<double>(4, -1.0), std::vector<double>(4, 1.0)};
    gmm.variances = {std::vector<double>(4, 0.8), std::vector<double>(4, 0.8)};
    auto denoiser = std::make_shared<GmmDenoiser>(gmm, &schedule);
    const ContinuousCore core{&schedule, denoiser, 4};
    const auto objective = count_above_threshold_rule(0.0, 2.0);
    GuidanceConfig config;
    config.family = GuidanceFamily::kSampleDestination;
    config.branch_size = 4;
    config.dest_iterations = 2;
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
      auto rng = derive_stream(seed + 71, stream_purpose::kDestination, static_cast<std::uint64_t>(trial));
      std::vector<double> x(4);
      rng.fill_normal(x);
      const ContinuousState state{x, schedule.time(10)};
      const auto cand = branch_out_destination_continuous(state, core, *objective, config, rng);
      const auto xhat = denoiser->predict_x1(state.x, state.t);
      worst = std::max(worst, objective->evaluate(xhat) - cand.value);
    }
    results.push_back(make_check("guidance/destination-keep-best-monotone", worst, 0.0));
  }

  // --- rollout invariants: unmasked tokens immutable, clean at t = 1 --------
  {
    const auto table = random_table(3, 3, seed + 83);
    const TabularDenoiser denoiser(table);
    const int T = 50;
    int violations = 0;
    for (int trial = 0; trial < 50; ++trial) {
      auto rng = derive_stream(seed + 84, stream_purpose::kStepNoise, static_cast<std::uint64_t>(trial));
      std::vector<int> x1(3);
      for (int& v : x1) v = static_cast<int>(rng.next_u64() % 3);
      const int start = 10;
      DiscreteSequence x = corrupt_discrete(x1, static_cast<double>(start) / T, rng);
      std::vector<int> frozen = x.tokens;
      for (int i = start; i < T; ++i) {
        x.t = static_cast<double>(i) / T;
        const RateSpec rates = model_rate(x, denoiser, x.t);
        x = euler_step(x, rates, 1.0 / T, rng);
        for (int d = 0; d < 3; ++d)
          if (frozen[static_cast<std::size_t>(d)] != kMaskToken &&
              x.tokens[static_cast<std::size_t>(d)] != frozen[static_cast<std::size_t>(d)])
            ++violations;
      }
      for (int d = 0; d < 3; ++d)
        if (x.tokens[static_cast<std::size_t>(d)] == kMaskToken) ++violations;
    }
    results.push_back(make_check("discrete/rollout-invariants", violations, 0.0));
  }

  // --- cost-model fidelity smoke check ---------------------------------------
  {
    const auto table = random_table(3, 3, seed + 91);
    auto denoiser = std::make_shared<TabularDenoiser>(table);
    const DiscreteCore core{10, denoiser, 3, 3};
    RowMatrix w(3, 3);
    RngStream wrng(seed + 92);
    for (double& v : w.data) v = wrng.normal();
    DiscreteTaskFns fns;
    fns.objective = token_count_rule(0, 2.0, 1.0);
    fns.predictor = linear_onehot_predictor(w);
    int mismatches = 0;
    for (const auto family : {GuidanceFamily::kSampleCurrent, GuidanceFamily::kSampleDestination,
                              GuidanceFamily::kGradient}) {
      GuidanceConfig config;
      config.family = family;
      config.branch_size = 3;
      config.mc_samples = 4;
      config.gamma = 2.0;
      const auto result = run_tree_search(core, fns, config, 2, seed + 93);
      const auto predicted = predict_cost(config, 2, core.steps, CoreShape{false, 3, 3});
      if (!(result.trace.counters == predicted)) ++mismatches;
    }
    results.push_back(make_check("search/cost-model-fidelity", mismatches, 0.0));
  }

  // --- predictor gradients vs central finite differences ---------------------
  {
    RngStream rng(seed + 97);
    RowMatrix w(3, 4);
    for (double& v : w.data) v = rng.normal();
    std::vector<RowMatrix> class_w;
    for (int c = 0; c < 3; ++c) {
      RowMatrix cw(3, 4);
      for (double& v : cw.data) v = rng.normal();
      class_w.push_back(std::move(cw));
    }
    const LinearOnehotPredictor linear(w);
    const RegressionOnehotPredictor regression(w, 0.7, 0.9);
    const SoftmaxClassifier classifier(class_w, 0);
    double max_rel = 0.0;
    const auto probe = [&](const OnehotPredictor& p) {
      for (int trial = 0; trial < 5; ++trial) {
        RowMatrix point(3, 4);
        for (int d = 0; d < 3; ++d) {
          double sum = 0.0;
          for (int s = 0; s < 4; ++s) {
            point(d, s) = rng.uniform_pos();
            sum += point(d, s);
          }
          for (int s = 0; s < 4; ++s) point(d, s) /= sum;
        }
        const RowMatrix grad = p.gradient(point);
        const RowMatrix fd = central_difference_gradient(p, point, 1e-4);
        double num = 0.0, den = 0.0;
        for (std::size_t i = 0; i < grad.data.size(); ++i) {
          num += (grad.data[i] - fd.data[i]) * (grad.data[i] - fd.data[i]);
          den += fd.data[i] * fd.data[i];
        }
        max_rel = std::max(max_rel, den > 0.0 ? std::sqrt(num / den) : std::sqrt(num));
      }
    };
    probe(linear);
    probe(regression);
    probe(classifier);
    results.push_back(make_check("objective/predictor-gradient-vs-fd", max_rel, 1e-5));
  }

  // --- pairing discipline ----------------------------------------------------
  {
    GuidanceConfig bad;
    bad.family = GuidanceFamily::kSampleDestination;
    bad.value_kind = ValueKind::kCurrent;
    bool threw = false;
    try {
      bad.validate();
    } catch (const std::invalid_argument&) {
      threw = true;
    }
    results.push_back(make_check("search/pairing-discipline-rejected", threw ? 0.0 : 1.0, 0.0));
  }

  return results;
}

bool report_verification(const std::vector<CheckResult>& results, std::ostream& out) {
  bool ok = true;
  for (const auto& r : results) {
    if (r.informational) {
      out << "[info] " << r.name << ": measured " << r.measured;
      if (!r.note.empty()) out << " (" << r.note << ")";
      out << '\n';
      continue;
    }
    out << (r.pass ? "[pass] " : "[FAIL] ") << r.name << ": measured " << r.measured
        << " (tolerance " << r.tolerance << ")\n";
    ok = ok && r.pass;
  }
  return ok;
}

}  // namespace treeg
