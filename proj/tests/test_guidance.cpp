#include <doctest.h>

#include <cmath>
#include <memory>
#include <stdexcept>
#include <vector>

#include "treeg/guidance.hpp"
#include "treeg/stats.hpp"

using namespace treeg;

namespace {

struct LinearObjective final : DiscreteObjective {
  const LinearOnehotPredictor* predictor;
  int n_states;
  double evaluate(const std::vector<int>& tokens) const override {
    return predictor->evaluate_tokens(tokens, n_states);
  }
};

TabularDistribution random_table(int dim, int n_states, std::uint64_t seed) {
  RngStream rng(seed);
  std::int64_t size = 1;
  for (int d = 0; d < dim; ++d) size *= n_states;
  std::vector<double> probs(static_cast<std::size_t>(size));
  double sum = 0.0;
  for (double& p : probs) {
    p = 0.05 + rng.uniform();
    sum += p;
  }
  for (double& p : probs) p /= sum;
  return TabularDistribution(dim, n_states, std::move(probs));
}

DiscreteCore make_core(const TabularDistribution& table, int steps) {
  return DiscreteCore{steps, std::make_shared<TabularDenoiser>(table), table.dim(),
                      table.n_states()};
}

}  // namespace

TEST_CASE("value_current on a clean input equals the objective exactly") {
  // Discrete: no masks at t = 1 means the denoiser rows are point masses.
  const auto table = random_table(3, 3, 17);
  const auto core = make_core(table, 10);
  const auto objective = token_count_rule(0, 2.0, 1.0);
  const DiscreteSequence clean{{0, 2, 0}, 1.0};
  for (int n : {1, 4, 64}) {
    auto rng = derive_stream(5, stream_purpose::kValueMc, static_cast<std::uint64_t>(n));
    CHECK(value_current(clean, core, *objective, n, rng) == objective->evaluate(clean.tokens));
  }

  // Continuous: the posterior mean is the identity at t = 1.
  const auto schedule = build_schedule(ScheduleKind::kLinearAlphaBar, 10);
  GaussianMixture gmm;
  gmm.weights = {1.0};
  gmm.means = {{0.0, 0.0}};
  gmm.variances = {{1.0, 1.0}};
  const ContinuousCore ccore{&schedule, std::make_shared<GmmDenoiser>(gmm, &schedule), 2};
  const auto cobjective = count_above_threshold_rule(0.0, 1.0);
  const ContinuousState cclean{{0.5, -0.5}, 1.0};
  auto rng = derive_stream(6, stream_purpose::kValueMc);
  CHECK(value_current(cclean, ccore, *cobjective, rng) == cobjective->evaluate(cclean.x));
}

TEST_CASE("point-mass tables give zero-variance values for any N") {
  std::vector<double> probs(9, 0.0);
  probs[4] = 1.0;  // the sequence (1, 1)
  const TabularDistribution table(2, 3, probs);
  const auto core = make_core(table, 10);
  const auto objective = token_count_rule(1, 2.0, 1.0);
  const DiscreteSequence x{{kMaskToken, kMaskToken}, 0.5};
  double first = 0.0;
  for (int n : {1, 7, 100}) {
    auto rng = derive_stream(9, stream_purpose::kValueMc, static_cast<std::uint64_t>(n));
    const double v = value_current(x, core, *objective, n, rng);
    if (n == 1)
      first = v;
    else
      CHECK(v == first);
  }
  CHECK(first == objective->evaluate({1, 1}));
}

TEST_CASE("monte-carlo value agrees with full enumeration on a 2x2 toy") {
  std::vector<double> probs{0.4, 0.1, 0.2, 0.3};
  const TabularDistribution table(2, 2, probs);
  const auto core = make_core(table, 10);
  const auto objective = token_count_rule(0, 1.0, 1.0);
  const DiscreteSequence x{{kMaskToken, kMaskToken}, 0.3};

  const RowMatrix prediction = core.denoiser->predict(x);
  const double exact = enumerated_log_py(prediction, *objective);

  const int n = 10000;
  auto rng = derive_stream(11, stream_purpose::kValueMc);
  const double estimate = mc_log_py(x, core, *objective, n, rng);

  // Bernoulli-style bound on the standard error of the averaged score.
  auto vrng = derive_stream(12, stream_purpose::kValueMc);
  std::vector<double> singles(400);
  for (auto& s : singles) s = mc_log_py(x, core, *objective, 1, vrng);
  const double se = std::sqrt(sample_variance(singles) / n);
  CHECK(std::abs(estimate - exact) < 3.0 * se + 1e-12);
}

TEST_CASE("mc_log_py matches value_current by construction") {
  const auto table = random_table(2, 3, 21);
  const auto core = make_core(table, 10);
  const auto objective = token_count_rule(2, 1.0, 1.0);
  const DiscreteSequence x{{kMaskToken, 1}, 0.4};
  auto a = derive_stream(13, stream_purpose::kValueMc);
  auto b = derive_stream(13, stream_purpose::kValueMc);
  CHECK(mc_log_py(x, core, *objective, 32, a) == value_current(x, core, *objective, 32, b));
}

TEST_CASE("mc_log_py variance scales as 1/N") {
  const auto table = random_table(2, 3, 23);
  const auto core = make_core(table, 10);
  const auto objective = token_count_rule(0, 1.0, 1.0);
  const DiscreteSequence x{{kMaskToken, kMaskToken}, 0.2};

  std::vector<double> log_n, log_var;
  int stream_id = 0;
  for (const int n : {1, 4, 16, 64, 256}) {
    std::vector<double> estimates(600);
    for (auto& e : estimates) {
      auto rng = derive_stream(29, stream_purpose::kValueMc, static_cast<std::uint64_t>(stream_id++));
      e = mc_log_py(x, core, *objective, n, rng);
    }
    log_n.push_back(std::log(static_cast<double>(n)));
    log_var.push_back(std::log(sample_variance(estimates)));
  }
  const auto fit = least_squares(log_n, log_var);
  CHECK(fit.slope == doctest::Approx(-1.0).epsilon(0.2));
  CHECK(fit.r_squared >= 0.98);
}

TEST_CASE("destination branch-out: zero exploration returns the point estimate") {
  const auto schedule = build_schedule(ScheduleKind::kLinearAlphaBar, 16);
  GaussianMixture gmm;
  gmm.weights = {0.5, 0.5};
  gmm.means = {std::vector<double>(3, -1.0), std::vector<double>(3, 1.0)};
  gmm.variances = {std::vector<double>(3, 0.6), std::vector<double>(3, 0.6)};
  auto denoiser = std::make_shared<GmmDenoiser>(gmm, &schedule);
  const ContinuousCore core{&schedule, denoiser, 3};
  const auto objective = count_above_threshold_rule(0.0, 2.0);

  GuidanceConfig config;
  config.family = GuidanceFamily::kSampleDestination;
  config.branch_size = 5;
  config.dest_iterations = 3;
  config.rho_scale = 0.0;

  const ContinuousState x{{0.2, -0.4, 1.0}, schedule.time(8)};
  auto rng = derive_stream(31, stream_purpose::kDestination);
  const auto cand = branch_out_destination_continuous(x, core, *objective, config, rng);
  const auto xhat = denoiser->predict_x1(x.x, x.t);
  REQUIRE(cand.destination.has_value());
  CHECK(*cand.destination == xhat);
  CHECK(cand.value == objective->evaluate(xhat));
}

TEST_CASE("dsg rescales the selected direction to norm sqrt(D) * sigma") {
  const auto schedule = build_schedule(ScheduleKind::kLinearAlphaBar, 16);
  GaussianMixture gmm;
  gmm.weights = {1.0};
  gmm.means = {std::vector<double>(4, 0.0)};
  gmm.variances = {std::vector<double>(4, 1.0)};
  auto denoiser = std::make_shared<GmmDenoiser>(gmm, &schedule);
  const ContinuousCore core{&schedule, denoiser, 4};
  const auto objective = count_above_threshold_rule(0.0, 4.0);

  GuidanceConfig config;
  config.family = GuidanceFamily::kSampleDestination;
  config.branch_size = 6;
  config.dsg = true;

  const ContinuousState x{{0.3, -0.1, 0.8, -1.2}, schedule.time(6)};
  const StepCoeffs c = step_coeffs(schedule, x.t);
  const auto xhat = denoiser->predict_x1(x.x, x.t);
  auto rng = derive_stream(37, stream_purpose::kDestination);
  const auto cand = branch_out_destination_continuous(x, core, *objective, config, rng);

  double norm_sq = 0.0;
  for (int e = 0; e < 4; ++e) {
    const double noise = cand.next.x[static_cast<std::size_t>(e)] -
                         c.c1 * x.x[static_cast<std::size_t>(e)] -
                         c.c2 * xhat[static_cast<std::size_t>(e)];
    norm_sq += noise * noise;
  }
  CHECK(std::sqrt(norm_sq) == doctest::Approx(std::sqrt(4.0) * c.sigma).epsilon(1e-12));
}

TEST_CASE("destination branch-out on a point-mass table is deterministic") {
  std::vector<double> probs(9, 0.0);
  probs[8] = 1.0;  // the sequence (2, 2)
  const TabularDistribution table(2, 3, probs);
  const int steps = 8;
  const auto core = make_core(table, steps);
  const auto objective = token_count_rule(2, 2.0, 1.0);

  // Mid-path: the masked dimension either unmasks toward the destination or
  // stays masked.
  const DiscreteSequence x{{kMaskToken, 2}, 0.5};
  auto rng = derive_stream(41, stream_purpose::kDestination);
  const auto cand = branch_out_destination_discrete(x, core, *objective, rng);
  REQUIRE(cand.destination.has_value());
  CHECK((*cand.destination) == std::vector<int>{2, 2});
  CHECK(cand.value == objective->evaluate({2, 2}));
  const int tok = cand.next.tokens[0];
  CHECK((tok == kMaskToken || tok == 2));

  // Final step: the clamped jump probability is 1, so everything unmasks.
  const DiscreteSequence last{{kMaskToken, kMaskToken}, 1.0 - 1.0 / steps};
  auto rng2 = derive_stream(43, stream_purpose::kDestination);
  const auto final_cand = branch_out_destination_discrete(last, core, *objective, rng2);
  CHECK(final_cand.next.tokens == std::vector<int>{2, 2});
}

TEST_CASE("gumbel softmax approaches the hard one-hot as tau -> 0") {
  const std::vector<double> logits{0.2, -1.0, 0.9};
  const std::vector<double> gumbels{0.3, 0.1, -0.2};
  const auto soft = gumbel_softmax(logits, gumbels, 1e-3);
  // argmax of logits + gumbels is index 2 (0.7)
  CHECK(std::abs(soft[2] - 1.0) < 1e-6);
  CHECK(soft[0] < 1e-6);
  CHECK(soft[1] < 1e-6);
  CHECK_THROWS_AS(gumbel_softmax(logits, gumbels, 0.0), std::invalid_argument);
}

TEST_CASE("st_gumbel_gradient: constant predictor gives exactly zero") {
  const auto table = random_table(3, 3, 47);
  const auto core = make_core(table, 10);
  RowMatrix zeros(3, 3, 0.0);
  const auto constant = linear_onehot_predictor(zeros);
  const DiscreteSequence x{{kMaskToken, 1, kMaskToken}, 0.5};
  auto rng = derive_stream(47, stream_purpose::kGumbel);
  const auto grad = st_gumbel_gradient(x, core, *constant, 32, 0.15, rng);
  for (double v : grad.data) CHECK(v == 0.0);
  auto rng2 = derive_stream(47, stream_purpose::kGumbel);
  CHECK_THROWS_AS(st_gumbel_gradient(x, core, *constant, 32, 0.0, rng2), std::invalid_argument);
}

TEST_CASE("taylor ratios: zero displacement and constant rows vanish") {
  const DiscreteSequence x{{1, kMaskToken}, 0.5};
  RowMatrix grad(2, 4);  // 3 tokens + mask column
  grad(0, 0) = 0.7;
  grad(0, 1) = 0.7;  // the current token's column
  grad(0, 2) = 1.7;
  grad(0, 3) = -0.3;
  for (int c = 0; c < 4; ++c) grad(1, c) = 2.5;  // constant row
  const auto ratios = taylor_ratios(x, grad);
  CHECK(ratios(0, 1) == 0.0);
  CHECK(ratios(0, 0) == doctest::Approx(0.0));
  CHECK(ratios(0, 2) == doctest::Approx(1.0));
  for (int j = 0; j < 3; ++j) CHECK(ratios(1, j) == 0.0);
}

TEST_CASE("exact ratios vanish at the current token under shared streams") {
  const auto table = random_table(3, 3, 53);
  const auto core = make_core(table, 10);
  RowMatrix w(3, 3);
  RngStream wrng(54);
  for (double& v : w.data) v = wrng.normal();
  const auto predictor = linear_onehot_predictor(w);
  LinearObjective objective;
  objective.predictor = predictor.get();
  objective.n_states = 3;

  const DiscreteSequence x{{0, kMaskToken, 2}, 0.5};
  auto rng = derive_stream(55, stream_purpose::kGumbel);
  const auto ratios = exact_ratios(x, core, objective, 64, rng);
  CHECK(ratios(0, 0) == 0.0);
  CHECK(ratios(2, 2) == 0.0);
}

TEST_CASE("guided rate: uniform tilt preserves the conditional jump law") {
  const auto table = random_table(2, 3, 59);
  const auto core = make_core(table, 10);
  const DiscreteSequence x{{kMaskToken, kMaskToken}, 0.5};
  const auto rates = model_rate(x, *core.denoiser, 0.5);

  RowMatrix uniform_tilt(2, 3, 0.8);
  const auto tilted = guided_rate(rates, uniform_tilt, 2.0);
  const double scale = std::exp(2.0 * 0.8);
  for (int d = 0; d < 2; ++d)
    for (int j = 0; j < 3; ++j)
      CHECK(tilted.rows[static_cast<std::size_t>(d)][static_cast<std::size_t>(j)] ==
            doctest::Approx(scale * rates.rows[static_cast<std::size_t>(d)][static_cast<std::size_t>(j)]));

  // One boosted entry raises that target's jump probability and leaves the
  // others untouched.
  RowMatrix single(2, 3, 0.0);
  single(0, 1) = 1.0;
  const auto boosted = guided_rate(rates, single, 1.5);
  CHECK(boosted.rows[0][1] > rates.rows[0][1]);
  CHECK(boosted.rows[0][0] == rates.rows[0][0]);
  CHECK(boosted.rows[0][2] == rates.rows[0][2]);
  CHECK(boosted.rows[1][0] == rates.rows[1][0]);

  // Extreme strengths stay finite thanks to the exponent clip.
  const auto clipped = guided_rate(rates, single, 1e9);
  for (double v : clipped.rows[0]) CHECK(std::isfinite(v));
}

TEST_CASE("continuous gradient step with gamma = 0 reproduces the plain step") {
  const auto schedule = build_schedule(ScheduleKind::kLinearAlphaBar, 12);
  GaussianMixture gmm;
  gmm.weights = {0.5, 0.5};
  gmm.means = {std::vector<double>(2, -1.0), std::vector<double>(2, 1.0)};
  gmm.variances = {std::vector<double>(2, 0.5), std::vector<double>(2, 0.5)};
  auto denoiser = std::make_shared<GmmDenoiser>(gmm, &schedule);
  const ContinuousCore core{&schedule, denoiser, 2};
  const GaussianTargetPredictor predictor({2.0, 2.0}, 1.0);

  const ContinuousState x{{0.1, -0.7}, schedule.time(4)};
  auto a = derive_stream(61, stream_purpose::kStepNoise);
  auto b = derive_stream(61, stream_purpose::kStepNoise);
  const auto guided = gradient_step_continuous(x, core, predictor, 0.0, a);
  const auto plain = ddpm_step(x, *denoiser, schedule, b);
  CHECK(guided.next.x == plain.x);
}

TEST_CASE("one guided continuous step improves the predicted endpoint (paired sign test)") {
  const auto schedule = build_schedule(ScheduleKind::kLinearAlphaBar, 12);
  GaussianMixture gmm;
  gmm.weights = {1.0};
  gmm.means = {std::vector<double>(2, 0.0)};
  gmm.variances = {std::vector<double>(2, 1.0)};
  auto denoiser = std::make_shared<GmmDenoiser>(gmm, &schedule);
  const ContinuousCore core{&schedule, denoiser, 2};
  const std::vector<double> target{1.5, -0.5};
  const GaussianTargetPredictor predictor(target, 1.0);

  const double t = schedule.time(5);
  int improved = 0;
  const int trials = 1000;
  for (int i = 0; i < trials; ++i) {
    auto srng = derive_stream(67, stream_purpose::kInit, static_cast<std::uint64_t>(i));
    std::vector<double> start(2);
    srng.fill_normal(start);
    const ContinuousState x{start, t};

    auto g = derive_stream(68, stream_purpose::kStepNoise, static_cast<std::uint64_t>(i));
    auto p = derive_stream(68, stream_purpose::kStepNoise, static_cast<std::uint64_t>(i));
    const auto guided = gradient_step_continuous(x, core, predictor, 0.4, g);
    const auto plain = ddpm_step(x, *denoiser, schedule, p);

    const auto dist_to_target = [&](const std::vector<double>& point) {
      const auto xhat = denoiser->predict_x1(point, guided.next.t);
      double acc = 0.0;
      for (int e = 0; e < 2; ++e) {
        const double d = xhat[static_cast<std::size_t>(e)] - target[static_cast<std::size_t>(e)];
        acc += d * d;
      }
      return acc;
    };
    if (dist_to_target(guided.next.x) < dist_to_target(plain.x)) ++improved;
  }
  CHECK(sign_test_pvalue(improved, trials) < 0.01);
}

TEST_CASE("branch-out draws are replay-identical given the stream") {
  const auto table = random_table(3, 3, 71);
  const auto core = make_core(table, 10);
  const DiscreteSequence x{{kMaskToken, kMaskToken, 1}, 0.5};
  auto a = derive_stream(71, stream_purpose::kStepNoise, 3, 1, 2);
  auto b = derive_stream(71, stream_purpose::kStepNoise, 3, 1, 2);
  const auto first = branch_out_current(x, core, a);
  const auto second = branch_out_current(x, core, b);
  CHECK(first.next.tokens == second.next.tokens);
}

TEST_CASE("discrete branch-out on a fully unmasked sequence stays put") {
  const auto table = random_table(2, 3, 73);
  const auto core = make_core(table, 10);
  const DiscreteSequence x{{1, 2}, 0.5};
  auto rng = derive_stream(73, stream_purpose::kStepNoise);
  const auto cand = branch_out_current(x, core, rng);
  CHECK(cand.next.tokens == x.tokens);
}
