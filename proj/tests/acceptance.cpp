// Acceptance suite: one test case per criterion, each printing a single
// pass/fail line with the measured quantities. Statistical cases run a few
// hundred seeded searches; the whole binary stays within minutes on one core.

#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "treeg/harness.hpp"
#include "treeg/search.hpp"
#include "treeg/stats.hpp"
#include "treeg/verify.hpp"

using namespace treeg;

namespace {

void report(int criterion, const std::string& name, bool pass, const std::string& detail) {
  std::printf("[criterion %2d] %-38s %s  (%s)\n", criterion, name.c_str(),
              pass ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
}

std::map<std::string, CheckResult> verification_by_name() {
  std::map<std::string, CheckResult> out;
  for (auto& check : run_verification_suite()) out[check.name] = check;
  return out;
}

const std::map<std::string, CheckResult>& verification() {
  static const auto cached = verification_by_name();
  return cached;
}

std::string measured(const CheckResult& check) {
  std::ostringstream out;
  out << check.name << " measured " << check.measured;
  return out.str();
}

// ---- shared toy builders ---------------------------------------------------

struct DiscreteToy {
  DiscreteCore core;
  DiscreteTaskFns fns;
  std::shared_ptr<DiscreteRuleObjective> rule;
};

DiscreteToy token_count_toy() {
  DiscreteToy toy;
  const auto table = TabularDistribution::count_weighted(8, 4, 0, 1.0);
  toy.core = DiscreteCore{32, std::make_shared<TabularDenoiser>(table), 8, 4};
  toy.rule = token_count_rule(0, 6.0, 1.0);
  toy.fns.objective = toy.rule;
  return toy;
}

struct ContinuousToy {
  std::shared_ptr<NoiseSchedule> schedule;
  ContinuousCore core;
  ContinuousTaskFns fns;
  std::shared_ptr<ContinuousRuleObjective> rule;
};

ContinuousToy count_rule_toy() {
  ContinuousToy toy;
  toy.schedule =
      std::make_shared<NoiseSchedule>(build_schedule(ScheduleKind::kLinearAlphaBar, 60));
  GaussianMixture gmm;
  gmm.weights = {0.5, 0.5};
  gmm.means = {std::vector<double>(16, -0.5), std::vector<double>(16, 0.5)};
  gmm.variances = {std::vector<double>(16, 1.0), std::vector<double>(16, 1.0)};
  toy.core =
      ContinuousCore{toy.schedule.get(), std::make_shared<GmmDenoiser>(gmm, toy.schedule.get()), 16};
  toy.rule = count_above_threshold_rule(0.0, 12.0);
  toy.fns.objective = toy.rule;
  return toy;
}

struct ClassifierToy {
  DiscreteCore core;
  DiscreteTaskFns fns;
  std::shared_ptr<SoftmaxClassifier> classifier;
};

ClassifierToy classifier_toy() {
  ClassifierToy toy;
  const auto table = TabularDistribution::count_weighted(8, 4, 1, 0.8);
  toy.core = DiscreteCore{32, std::make_shared<TabularDenoiser>(table), 8, 4};
  const double raw[3][4] = {{1.5, 0.0, 0.0, 0.0}, {0.0, 1.2, 0.6, 0.0}, {0.0, 0.4, 1.0, 0.8}};
  std::vector<RowMatrix> weights;
  for (const auto& row : raw) {
    RowMatrix w(8, 4);
    for (int d = 0; d < 8; ++d)
      for (int s = 0; s < 4; ++s) w(d, s) = row[s];
    weights.push_back(std::move(w));
  }
  toy.classifier = std::make_shared<SoftmaxClassifier>(std::move(weights), 1);
  toy.fns.objective = toy.classifier;
  toy.fns.predictor = toy.classifier;
  return toy;
}

}  // namespace

TEST_CASE("criterion 1: exact identities") {
  const auto& checks = verification();
  const auto& schedule_linear = checks.at("schedule/mean-consistency-linear-T1000");
  const auto& schedule_cosine = checks.at("schedule/mean-consistency-cosine-T1000");
  const auto& rate = checks.at("discrete/rate-marginalization-D3S4");
  const auto& destination = checks.at("discrete/destination-marginalization-D2S3");
  const bool pass =
      schedule_linear.pass && schedule_cosine.pass && rate.pass && destination.pass;
  report(1, "exact identities <= 1e-12", pass,
         measured(schedule_linear) + "; " + measured(rate) + "; " + measured(destination));
  CHECK(schedule_linear.pass);
  CHECK(schedule_cosine.pass);
  CHECK(rate.pass);
  CHECK(destination.pass);
}

TEST_CASE("criterion 2: two-stage sampler mean identity; variance gap reported") {
  const auto& checks = verification();
  const auto& mean_identity = checks.at("continuous/two-stage-mean-identity");
  const auto& variance_gap = checks.at("continuous/two-stage-variance-gap");
  report(2, "endpoint-composite mean <= 1e-12", mean_identity.pass,
         measured(mean_identity) + "; informational variance gap (relative, max over grid) = " +
             std::to_string(variance_gap.measured));
  CHECK(mean_identity.pass);
}

TEST_CASE("criterion 3: unguided rollout matches the data table (chi-square)") {
  // Product-form table: per-dimension unmasking is endpoint-exact at any T,
  // so the goodness-of-fit test carries no discretization bias.
  RowMatrix marginals(2, 3);
  marginals(0, 0) = 0.5;
  marginals(0, 1) = 0.3;
  marginals(0, 2) = 0.2;
  marginals(1, 0) = 0.2;
  marginals(1, 1) = 0.3;
  marginals(1, 2) = 0.5;
  const auto table = TabularDistribution::product_marginals(marginals);
  const TabularDenoiser denoiser(table);
  const int steps = 100;
  const int n_samples = 100000;

  std::vector<int> histogram(9, 0);
  std::vector<int> tokens(2);
  for (int i = 0; i < n_samples; ++i) {
    auto rng = derive_stream(777, stream_purpose::kStepNoise, static_cast<std::uint64_t>(i));
    DiscreteSequence x{{kMaskToken, kMaskToken}, 0.0};
    for (int s = 0; s < steps; ++s) {
      x.t = static_cast<double>(s) / steps;
      x = euler_step(x, model_rate(x, denoiser, x.t), 1.0 / steps, rng);
    }
    REQUIRE(x.masked_count() == 0);
    tokens = x.tokens;
    histogram[static_cast<std::size_t>(table.encode(tokens))]++;
  }

  double statistic = 0.0;
  for (std::size_t cell = 0; cell < 9; ++cell) {
    const double expected = n_samples * table.probs()[cell];
    const double diff = histogram[cell] - expected;
    statistic += diff * diff / expected;
  }
  const double p_value = chi_square_pvalue(statistic, 8);
  const bool pass = p_value > 0.001;
  std::ostringstream detail;
  detail << "chi2 = " << statistic << ", dof = 8, p = " << p_value;
  report(3, "unguided rollout goodness-of-fit", pass, detail.str());
  CHECK(pass);
}

TEST_CASE("criterion 4: discrete token-count guidance halves the MAE") {
  const auto toy = token_count_toy();
  GuidanceConfig unguided;
  unguided.family = GuidanceFamily::kSampleCurrent;
  GuidanceConfig guided = unguided;
  guided.branch_size = 8;
  guided.mc_samples = 16;

  const int n_seeds = 200;
  SearchOptions options;
  options.record_steps = false;
  std::vector<double> mae_unguided(n_seeds), mae_guided(n_seeds);
  for (int s = 0; s < n_seeds; ++s) {
    const auto base = run_tree_search(toy.core, toy.fns, unguided, 1, static_cast<std::uint64_t>(s), options);
    const auto tree = run_tree_search(toy.core, toy.fns, guided, 1, static_cast<std::uint64_t>(s), options);
    mae_unguided[static_cast<std::size_t>(s)] = std::abs(6.0 - toy.rule->rule_value(base.sample));
    mae_guided[static_cast<std::size_t>(s)] = std::abs(6.0 - toy.rule->rule_value(tree.sample));
  }
  const double ratio = mean(mae_guided) / mean(mae_unguided);
  std::ostringstream detail;
  detail << "unguided MAE " << mean(mae_unguided) << ", guided MAE " << mean(mae_guided)
         << ", ratio " << ratio << " (need <= 0.5), " << n_seeds << " seeds";
  const bool pass = ratio <= 0.5;
  report(4, "token-count toy, branch width 8", pass, detail.str());
  CHECK(pass);
}

TEST_CASE("criterion 5: continuous count-rule guidance cuts the loss to <= 20%") {
  const auto toy = count_rule_toy();
  GuidanceConfig unguided;
  unguided.family = GuidanceFamily::kSampleCurrent;
  GuidanceConfig guided;
  guided.family = GuidanceFamily::kSampleDestination;
  guided.branch_size = 16;
  guided.dest_iterations = 2;
  guided.dsg = true;
  guided.rho_scale = 1.0;

  const int n_seeds = 200;
  SearchOptions options;
  options.record_steps = false;
  std::vector<double> loss_unguided(n_seeds), loss_guided(n_seeds);
  for (int s = 0; s < n_seeds; ++s) {
    const auto base = run_tree_search(toy.core, toy.fns, unguided, 1, static_cast<std::uint64_t>(s), options);
    const auto tree = run_tree_search(toy.core, toy.fns, guided, 1, static_cast<std::uint64_t>(s), options);
    loss_unguided[static_cast<std::size_t>(s)] = -base.trace.final_fy;
    loss_guided[static_cast<std::size_t>(s)] = -tree.trace.final_fy;
  }
  const double ratio = mean(loss_guided) / mean(loss_unguided);
  std::ostringstream detail;
  detail << "unguided loss " << mean(loss_unguided) << ", guided loss " << mean(loss_guided)
         << ", ratio " << ratio << " (need <= 0.2), " << n_seeds << " seeds";
  const bool pass = ratio <= 0.2;
  report(5, "count-rule toy, destination K=16", pass, detail.str());
  CHECK(pass);
}

TEST_CASE("criterion 6: gradient guidance raises the target class log-probability") {
  const auto toy = classifier_toy();
  const std::vector<double> gammas{0.0, 1.0, 5.0, 20.0};
  const int n_seeds = 100;
  SearchOptions options;
  options.record_steps = false;

  std::vector<double> means;
  std::ostringstream curve;
  for (const double gamma : gammas) {
    GuidanceConfig config;
    config.family = GuidanceFamily::kGradient;
    config.mc_samples = 20;
    config.gamma = gamma;
    std::vector<double> fy(n_seeds);
    for (int s = 0; s < n_seeds; ++s)
      fy[static_cast<std::size_t>(s)] =
          run_tree_search(toy.core, toy.fns, config, 1, static_cast<std::uint64_t>(s), options)
              .trace.final_fy;
    means.push_back(mean(fy));
    curve << "gamma " << gamma << ": " << mean(fy) << "; ";
  }
  const double base = means.front();
  const double best = *std::max_element(means.begin(), means.end());
  // Rise then saturate: late increments collapse relative to the first one.
  const double first_step = means[1] - means[0];
  const double last_step = means[3] - means[2];
  const bool pass = best > base && last_step < first_step;
  report(6, "classifier toy, gamma sweep", pass,
         curve.str() + "best - unguided = " + std::to_string(best - base));
  CHECK(best > base);
  CHECK(last_step < first_step);
}

TEST_CASE("criterion 7: scaling law and the A-vs-K trade-off") {
  const auto toy = token_count_toy();
  GuidanceConfig config;
  config.family = GuidanceFamily::kSampleCurrent;
  config.mc_samples = 16;

  const int n_seeds = 100;
  std::vector<std::uint64_t> seeds(n_seeds);
  for (int i = 0; i < n_seeds; ++i) seeds[static_cast<std::size_t>(i)] = static_cast<std::uint64_t>(i);
  SearchOptions options;
  options.record_steps = false;

  bool monotone = true;
  bool best_of_n_suboptimal = true;
  double prev_front = 0.0, prev_se = 0.0;
  bool first = true;
  std::ostringstream detail;
  std::vector<double> log_budget, log_wall;
  for (const int budget : {1, 2, 4, 8, 16}) {
    const auto cells = sweep_fixed_budget(toy.core, toy.fns, config, budget, seeds, options);
    double front = -1e300, front_se = 0.0;
    for (const auto& cell : cells) {
      if (cell.mean_objective > front) {
        front = cell.mean_objective;
        front_se = cell.sd_objective / std::sqrt(static_cast<double>(n_seeds));
      }
      if (budget == 16 && cell.branch_size == 1) {
        // The Best-of-N cell must not be the per-budget frontier.
        for (const auto& other : cells)
          if (other.branch_size != 1 && other.mean_objective <= cell.mean_objective)
            best_of_n_suboptimal = false;
      }
      if (cell.active_size == 1) {
        log_budget.push_back(std::log(static_cast<double>(budget)));
        log_wall.push_back(std::log(cell.mean_wall_s));
      }
    }
    if (!first && front < prev_front - 2.0 * (front_se + prev_se)) monotone = false;
    detail << "budget " << budget << " frontier " << front << "; ";
    first = false;
    prev_front = front;
    prev_se = front_se;
  }
  const auto wall_fit = least_squares(log_budget, log_wall);
  detail << "wall-vs-budget log-log slope " << wall_fit.slope
         << " (informational: the restriction-slice denoiser cheapens as tokens unmask, so "
            "wall time grows sublinearly; counted cost units are checked exactly in criterion 9)";
  const bool pass = monotone && best_of_n_suboptimal;
  report(7, "frontier monotone; (16,1) not frontier", pass, detail.str());
  CHECK(monotone);
  CHECK(best_of_n_suboptimal);
}

TEST_CASE("criterion 8: estimator quality") {
  const auto& checks = verification();
  const auto& gumbel = checks.at("guidance/st-gumbel-vs-closed-form-N1024");
  const auto& taylor_linear = checks.at("guidance/taylor-equals-exact-linear");

  // Monte-Carlo value variance scales as 1/N.
  const auto table = TabularDistribution::count_weighted(2, 3, 0, 0.9);
  const DiscreteCore core{10, std::make_shared<TabularDenoiser>(table), 2, 3};
  const auto objective = token_count_rule(0, 1.0, 1.0);
  const DiscreteSequence x{{kMaskToken, kMaskToken}, 0.2};
  std::vector<double> log_n, log_var;
  int stream_id = 0;
  for (const int n : {1, 4, 16, 64, 256}) {
    std::vector<double> estimates(800);
    for (auto& e : estimates) {
      auto rng = derive_stream(4242, stream_purpose::kValueMc, static_cast<std::uint64_t>(stream_id++));
      e = mc_log_py(x, core, *objective, n, rng);
    }
    log_n.push_back(std::log(static_cast<double>(n)));
    log_var.push_back(std::log(sample_variance(estimates)));
  }
  const auto fit = least_squares(log_n, log_var);
  const bool slope_ok = std::abs(fit.slope + 1.0) <= 0.2;

  // Taylor-vs-exact disagreement for a quadratic predictor, reported. The
  // Taylor side uses the gradient route actually run at inference time (the
  // straight-through estimate, here at a large sample size); the curvature of
  // the predictor leaves a genuine residual against the enumerated ratios.
  const auto quad_table = TabularDistribution::count_weighted(3, 3, 0, 0.8);
  const TabularDenoiser quad_denoiser(quad_table);
  RowMatrix w(3, 3);
  RngStream wrng(4243);
  for (double& v : w.data) v = wrng.normal();
  const RegressionOnehotPredictor quadratic(w, 0.5, 1.0);
  struct AsObjective final : DiscreteObjective {
    const OnehotPredictor* p;
    double evaluate(const std::vector<int>& tokens) const override {
      return p->evaluate_tokens(tokens, 3);
    }
  };
  AsObjective quad_obj;
  quad_obj.p = &quadratic;
  const DiscreteSequence qx{{kMaskToken, 1, kMaskToken}, 0.5};
  const auto nb = quad_denoiser.neighbor_posteriors(qx);
  auto grng = derive_stream(4245, stream_purpose::kGumbel);
  const RowMatrix grad = st_gumbel_gradient_from(qx, nb, quadratic, 8192, 0.15, grng);
  const RowMatrix taylor = taylor_ratios(qx, grad);
  auto zrng = derive_stream(4244, stream_purpose::kGumbel);
  const RowMatrix exact = exact_ratios_from(qx, nb, quad_obj, 0, zrng);
  double quad_gap = 0.0;
  for (int d = 0; d < 3; ++d) {
    if (qx.tokens[static_cast<std::size_t>(d)] != kMaskToken) continue;
    for (int j = 0; j < 3; ++j)
      quad_gap = std::max(quad_gap, std::abs(taylor(d, j) - exact(d, j)));
  }

  std::ostringstream detail;
  detail << "st-gumbel rel err " << gumbel.measured << " (<= 0.05); variance slope " << fit.slope
         << " (-1 +- 0.2, R2 " << fit.r_squared << "); taylor==exact linear gap "
         << taylor_linear.measured << " (<= 1e-10); quadratic-predictor taylor-exact gap "
         << quad_gap << " (reported)";
  const bool pass = gumbel.pass && slope_ok && taylor_linear.pass;
  report(8, "gradient and value estimators", pass, detail.str());
  CHECK(gumbel.pass);
  CHECK(slope_ok);
  CHECK(taylor_linear.pass);
  CHECK(quad_gap > 1e-10);  // the quadratic predictor genuinely disagrees
}

TEST_CASE("criterion 9: instrumented counters equal predict_cost on a 3x3 grid") {
  const auto table = TabularDistribution::count_weighted(3, 3, 0, 0.9);
  const DiscreteCore dcore{8, std::make_shared<TabularDenoiser>(table), 3, 3};
  DiscreteTaskFns dfns;
  dfns.objective = token_count_rule(0, 2.0, 1.0);
  RowMatrix w(3, 3);
  RngStream wrng(5);
  for (double& v : w.data) v = wrng.normal();
  dfns.predictor = linear_onehot_predictor(w);

  auto schedule = std::make_shared<NoiseSchedule>(build_schedule(ScheduleKind::kLinearAlphaBar, 8));
  GaussianMixture gmm;
  gmm.weights = {1.0};
  gmm.means = {std::vector<double>(3, 0.0)};
  gmm.variances = {std::vector<double>(3, 1.0)};
  ContinuousCore ccore{schedule.get(), std::make_shared<GmmDenoiser>(gmm, schedule.get()), 3};
  ContinuousTaskFns cfns;
  cfns.objective = count_above_threshold_rule(0.0, 2.0);
  cfns.predictor = std::make_shared<GaussianTargetPredictor>(std::vector<double>(3, 1.0), 1.0);

  SearchOptions options;
  options.record_steps = false;
  int mismatches = 0;
  int cases = 0;
  for (const auto family : {GuidanceFamily::kSampleCurrent, GuidanceFamily::kSampleDestination,
                            GuidanceFamily::kGradient}) {
    for (const int a : {1, 2, 4}) {
      for (const int k : {1, 2, 4}) {
        GuidanceConfig config;
        config.family = family;
        config.branch_size = k;
        config.mc_samples = 4;
        config.gamma = 1.0;

        const auto dres = run_tree_search(dcore, dfns, config, a, 99, options);
        ++cases;
        if (!(dres.trace.counters ==
              predict_cost(config, a, dcore.steps, CoreShape{false, 3, 3})))
          ++mismatches;

        GuidanceConfig cconfig = config;
        cconfig.mc_samples = 1;
        cconfig.dest_iterations = family == GuidanceFamily::kSampleDestination ? 2 : 1;
        const auto cres = run_tree_search(ccore, cfns, cconfig, a, 99, options);
        ++cases;
        if (!(cres.trace.counters ==
              predict_cost(cconfig, a, schedule->steps(), CoreShape{true, 3, 0})))
          ++mismatches;
      }
    }
  }
  std::ostringstream detail;
  detail << cases << " (family, A, K, core) cases, " << mismatches << " mismatches";
  report(9, "cost-model fidelity", mismatches == 0, detail.str());
  CHECK(mismatches == 0);
}

TEST_CASE("criterion 10: bit-identical CSV columns, serial and concurrent") {
  const std::string config_text = R"({
    "task": {
      "id": "det",
      "kind": "discrete-tabular",
      "dim": 4,
      "n_states": 3,
      "data": {"family": "count-weighted", "token": 0, "theta": 0.9}
    },
    "schedule": {"kind": "linear-alphabar", "steps": 12},
    "objective": {"kind": "token-count", "token": 0, "target": 3, "sigma": 1.0},
    "guidance": {"family": "sample-current", "k": 4, "n": 8},
    "search": {"a": 2, "seeds": {"base": 10, "count": 6}REPLACED},
    "output": {"dir": "unused"}
  })";

  const auto strip_wall = [](const std::string& row) {
    std::vector<std::string> cols;
    std::stringstream ss(row);
    std::string item;
    while (std::getline(ss, item, ',')) cols.push_back(item);
    cols[8] = "-";
    std::string out;
    for (const auto& c : cols) out += c + "|";
    return out;
  };

  const auto rows_for = [&](bool parallel) {
    std::string text = config_text;
    const std::string marker = "REPLACED";
    text.replace(text.find(marker), marker.size(),
                 parallel ? ", \"parallel\": true" : ", \"parallel\": false");
    const auto exp = parse_experiment(text);
    const auto rows = run_experiment(exp, /*write_outputs=*/false);
    std::vector<std::string> formatted;
    for (const auto& row : rows) formatted.push_back(strip_wall(format_csv_row(row)));
    return formatted;
  };

  const auto serial_a = rows_for(false);
  const auto serial_b = rows_for(false);
  const auto concurrent = rows_for(true);

  // Engine-level concurrency on top of seed-level concurrency.
  const auto engine_parallel = [&]() {
    std::string text = config_text;
    const std::string marker = "REPLACED";
    text.replace(text.find(marker), marker.size(), "");
    const auto exp = parse_experiment(text);
    std::vector<std::string> formatted;
    for (const auto seed : exp.seeds) {
      SearchOptions options;
      options.parallel = true;
      options.max_threads = 4;
      options.record_steps = false;
      const auto result =
          run_tree_search(exp.discrete_core, exp.discrete_fns, exp.guidance, exp.active_size, seed, options);
      ResultRow row;
      row.task = exp.task_id;
      row.family = to_string(exp.guidance.family);
      row.active_size = exp.active_size;
      row.branch_size = exp.guidance.branch_size;
      row.mc_samples = exp.guidance.mc_samples;
      row.seed = seed;
      row.final_fy = result.trace.final_fy;
      row.mae = exp.discrete_mae ? exp.discrete_mae(result.sample) : 0.0;
      row.wall_s = result.trace.wall_seconds;
      row.cost = result.trace.counters;
      formatted.push_back(strip_wall(format_csv_row(row)));
    }
    return formatted;
  }();

  const bool pass = serial_a == serial_b && serial_a == concurrent && serial_a == engine_parallel;
  report(10, "determinism across execution modes", pass,
         std::to_string(serial_a.size()) + " rows compared across 4 execution modes");
  CHECK(serial_a == serial_b);
  CHECK(serial_a == concurrent);
  CHECK(serial_a == engine_parallel);
}
