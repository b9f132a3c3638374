#include "treeg/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "treeg/stats.hpp"

namespace treeg {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& path, const std::string& message) {
  throw ConfigError("config error at " + path + ": " + message);
}

void require_keys(const json& obj, const std::string& path,
                  std::initializer_list<const char*> required,
                  std::initializer_list<const char*> optional) {
  if (!obj.is_object()) fail(path, "expected an object");
  for (const char* key : required)
    if (!obj.contains(key)) fail(path, std::string("missing key '") + key + "'");
  for (const auto& [key, value] : obj.items()) {
    const auto known = [&](std::initializer_list<const char*> list) {
      for (const char* k : list)
        if (key == k) return true;
      return false;
    };
    if (!known(required) && !known(optional)) fail(path + "." + key, "unknown key");
  }
}

double get_number(const json& obj, const std::string& path, const char* key) {
  if (!obj.at(key).is_number()) fail(path + "." + key, "expected a number");
  return obj.at(key).get<double>();
}

int get_int(const json& obj, const std::string& path, const char* key) {
  if (!obj.at(key).is_number_integer()) fail(path + "." + key, "expected an integer");
  return obj.at(key).get<int>();
}

bool get_bool(const json& obj, const std::string& path, const char* key, bool fallback) {
  if (!obj.contains(key)) return fallback;
  if (!obj.at(key).is_boolean()) fail(path + "." + key, "expected a boolean");
  return obj.at(key).get<bool>();
}

std::string get_string(const json& obj, const std::string& path, const char* key) {
  if (!obj.at(key).is_string()) fail(path + "." + key, "expected a string");
  return obj.at(key).get<std::string>();
}

// A per-component parameter: scalar broadcasts to all dimensions, an array
// must have exactly `dim` entries.
std::vector<double> get_broadcast_vector(const json& value, const std::string& path, int dim) {
  std::vector<double> out;
  if (value.is_number()) {
    out.assign(static_cast<std::size_t>(dim), value.get<double>());
    return out;
  }
  if (!value.is_array() || static_cast<int>(value.size()) != dim)
    fail(path, "expected a number or an array of length " + std::to_string(dim));
  for (const auto& v : value) {
    if (!v.is_number()) fail(path, "expected numeric entries");
    out.push_back(v.get<double>());
  }
  return out;
}

RowMatrix get_weight_matrix(const json& value, const std::string& path, int dim, int n_states) {
  RowMatrix w(dim, n_states);
  if (!value.is_array() || value.empty()) fail(path, "expected an array");
  if (value.front().is_number()) {
    // length-S row broadcast across dimensions
    if (static_cast<int>(value.size()) != n_states)
      fail(path, "expected " + std::to_string(n_states) + " entries");
    for (int d = 0; d < dim; ++d)
      for (int s = 0; s < n_states; ++s) w(d, s) = value.at(static_cast<std::size_t>(s)).get<double>();
    return w;
  }
  if (static_cast<int>(value.size()) != dim) fail(path, "expected D rows");
  for (int d = 0; d < dim; ++d) {
    const auto& row = value.at(static_cast<std::size_t>(d));
    if (!row.is_array() || static_cast<int>(row.size()) != n_states)
      fail(path, "expected rows of length " + std::to_string(n_states));
    for (int s = 0; s < n_states; ++s) w(d, s) = row.at(static_cast<std::size_t>(s)).get<double>();
  }
  return w;
}

GaussianMixture parse_gmm(const json& obj, const std::string& path, int dim) {
  require_keys(obj, path, {"weights", "means", "variances"}, {});
  GaussianMixture gmm;
  for (const auto& w : obj.at("weights")) gmm.weights.push_back(w.get<double>());
  const int k = static_cast<int>(gmm.weights.size());
  if (!obj.at("means").is_array() || static_cast<int>(obj.at("means").size()) != k)
    fail(path + ".means", "expected one entry per component");
  if (!obj.at("variances").is_array() || static_cast<int>(obj.at("variances").size()) != k)
    fail(path + ".variances", "expected one entry per component");
  for (int i = 0; i < k; ++i) {
    gmm.means.push_back(get_broadcast_vector(obj.at("means").at(static_cast<std::size_t>(i)),
                                             path + ".means", dim));
    gmm.variances.push_back(get_broadcast_vector(obj.at("variances").at(static_cast<std::size_t>(i)),
                                                 path + ".variances", dim));
  }
  try {
    gmm.validate();
  } catch (const std::invalid_argument& e) {
    fail(path, e.what());
  }
  return gmm;
}

TabularDistribution parse_data(const json& obj, const std::string& path, int dim, int n_states) {
  require_keys(obj, path, {"family"}, {"token", "theta", "marginals", "probs"});
  const std::string family = get_string(obj, path, "family");
  try {
    if (family == "uniform") return TabularDistribution::uniform(dim, n_states);
    if (family == "count-weighted") {
      const int token = obj.contains("token") ? get_int(obj, path, "token") : 0;
      const double theta = obj.contains("theta") ? get_number(obj, path, "theta") : 1.0;
      return TabularDistribution::count_weighted(dim, n_states, token, theta);
    }
    if (family == "product-marginals") {
      if (!obj.contains("marginals")) fail(path, "product-marginals requires 'marginals'");
      const RowMatrix m = get_weight_matrix(obj.at("marginals"), path + ".marginals", dim, n_states);
      return TabularDistribution::product_marginals(m);
    }
    if (family == "explicit") {
      if (!obj.contains("probs")) fail(path, "explicit table requires 'probs'");
      std::vector<double> probs;
      for (const auto& v : obj.at("probs")) probs.push_back(v.get<double>());
      return TabularDistribution(dim, n_states, std::move(probs));
    }
  } catch (const std::invalid_argument& e) {
    fail(path, e.what());
  }
  fail(path + ".family", "unknown data family '" + family + "'");
}

}  // namespace

Experiment parse_experiment(const std::string& json_text, const std::string& origin) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError("config error in " + origin + ": " + e.what());
  }
  require_keys(root, "$", {"task", "schedule", "objective", "guidance", "search"}, {"output"});

  Experiment exp;

  // --- task block ---
  const json& task = root.at("task");
  require_keys(task, "task", {"kind", "dim"},
               {"id", "n_states", "gmm", "data"});
  const std::string kind = get_string(task, "task", "kind");
  const int dim = get_int(task, "task", "dim");
  if (dim < 1) fail("task.dim", "must be >= 1");
  exp.task_id = task.contains("id") ? get_string(task, "task", "id") : kind;

  // --- schedule block ---
  const json& sched = root.at("schedule");
  require_keys(sched, "schedule", {"kind", "steps"}, {});
  const int steps = get_int(sched, "schedule", "steps");
  ScheduleKind schedule_kind;
  try {
    schedule_kind = schedule_kind_from_string(get_string(sched, "schedule", "kind"));
    exp.schedule = std::make_shared<NoiseSchedule>(build_schedule(schedule_kind, steps));
  } catch (const std::invalid_argument& e) {
    fail("schedule", e.what());
  }

  // --- guidance block ---
  const json& guid = root.at("guidance");
  require_keys(guid, "guidance", {"family"},
               {"k", "n", "gamma", "gamma_schedule", "rho_scale", "n_iter", "tau", "dsg",
                "ratio_mode", "window", "value_function"});
  try {
    exp.guidance.family = guidance_family_from_string(get_string(guid, "guidance", "family"));
  } catch (const std::invalid_argument& e) {
    fail("guidance.family", e.what());
  }
  if (guid.contains("k")) exp.guidance.branch_size = get_int(guid, "guidance", "k");
  if (guid.contains("n")) exp.guidance.mc_samples = get_int(guid, "guidance", "n");
  if (guid.contains("gamma")) exp.guidance.gamma = get_number(guid, "guidance", "gamma");
  if (guid.contains("gamma_schedule")) {
    const std::string gs = get_string(guid, "guidance", "gamma_schedule");
    if (gs == "constant")
      exp.guidance.gamma_schedule = GammaSchedule::kConstant;
    else if (gs == "linear-ramp")
      exp.guidance.gamma_schedule = GammaSchedule::kLinearRamp;
    else
      fail("guidance.gamma_schedule", "expected 'constant' or 'linear-ramp'");
  }
  if (guid.contains("rho_scale")) exp.guidance.rho_scale = get_number(guid, "guidance", "rho_scale");
  if (guid.contains("n_iter")) exp.guidance.dest_iterations = get_int(guid, "guidance", "n_iter");
  if (guid.contains("tau")) exp.guidance.tau = get_number(guid, "guidance", "tau");
  exp.guidance.dsg = get_bool(guid, "guidance", "dsg", false);
  if (guid.contains("ratio_mode")) {
    const std::string rm = get_string(guid, "guidance", "ratio_mode");
    if (rm == "taylor")
      exp.guidance.ratio_mode = RatioMode::kTaylor;
    else if (rm == "exact")
      exp.guidance.ratio_mode = RatioMode::kExact;
    else
      fail("guidance.ratio_mode", "expected 'taylor' or 'exact'");
  }
  if (guid.contains("window")) {
    const auto& w = guid.at("window");
    if (!w.is_array() || w.size() != 2) fail("guidance.window", "expected [t_start, t_end]");
    exp.guidance.window_start = w.at(0).get<double>();
    exp.guidance.window_end = w.at(1).get<double>();
  }
  if (guid.contains("value_function")) {
    const std::string vf = get_string(guid, "guidance", "value_function");
    if (vf == "current")
      exp.guidance.value_kind = ValueKind::kCurrent;
    else if (vf == "destination")
      exp.guidance.value_kind = ValueKind::kDestination;
    else
      fail("guidance.value_function", "expected 'current' or 'destination'");
  }
  try {
    exp.guidance.validate();
  } catch (const std::invalid_argument& e) {
    fail("guidance", e.what());
  }

  // --- objective block (task-kind dependent) ---
  const json& objective = root.at("objective");

  if (kind == "continuous-gmm") {
    exp.continuous = true;
    if (!task.contains("gmm")) fail("task.gmm", "continuous-gmm task requires a gmm block");
    GaussianMixture gmm = parse_gmm(task.at("gmm"), "task.gmm", dim);
    auto denoiser = std::make_shared<GmmDenoiser>(std::move(gmm), exp.schedule.get());
    exp.continuous_core = ContinuousCore{exp.schedule.get(), denoiser, dim};

    require_keys(objective, "objective", {"kind"},
                 {"epsilon", "target", "sigma", "feature", "predictor"});
    const std::string okind = get_string(objective, "objective", "kind");
    if (okind == "count-above-threshold") {
      const double epsilon = objective.contains("epsilon") ? get_number(objective, "objective", "epsilon") : 0.0;
      const double target = get_number(objective, "objective", "target");
      auto rule = count_above_threshold_rule(epsilon, target);
      exp.continuous_fns.objective = rule;
      exp.continuous_mae = [rule, target](std::span<const double> x) {
        return std::abs(target - rule->rule_value(x));
      };
    } else if (okind == "gaussian-regression") {
      const double target = get_number(objective, "objective", "target");
      const double sigma = objective.contains("sigma") ? get_number(objective, "objective", "sigma") : 1.0;
      const std::string feature =
          objective.contains("feature") ? get_string(objective, "objective", "feature") : "mean";
      std::function<double(std::span<const double>)> f;
      if (feature == "sum") {
        f = [](std::span<const double> x) {
          double acc = 0.0;
          for (double v : x) acc += v;
          return acc;
        };
      } else if (feature == "mean") {
        f = [](std::span<const double> x) {
          double acc = 0.0;
          for (double v : x) acc += v;
          return acc / static_cast<double>(x.size());
        };
      } else {
        fail("objective.feature", "expected 'sum' or 'mean'");
      }
      try {
        exp.continuous_fns.objective = gaussian_regression_objective(f, target, sigma);
      } catch (const std::invalid_argument& e) {
        fail("objective", e.what());
      }
      exp.continuous_mae = [f, target](std::span<const double> x) {
        return std::abs(target - f(x));
      };
    } else {
      fail("objective.kind", "unknown continuous objective '" + okind + "'");
    }

    if (objective.contains("predictor")) {
      const json& pred = objective.at("predictor");
      require_keys(pred, "objective.predictor", {"kind"}, {"target", "sigma"});
      const std::string pkind = get_string(pred, "objective.predictor", "kind");
      if (pkind == "gaussian-target") {
        const auto target = get_broadcast_vector(pred.at("target"), "objective.predictor.target", dim);
        const double sigma = pred.contains("sigma") ? get_number(pred, "objective.predictor", "sigma") : 1.0;
        exp.continuous_fns.predictor = std::make_shared<GaussianTargetPredictor>(target, sigma);
      } else {
        fail("objective.predictor.kind", "unknown predictor '" + pkind + "'");
      }
    }
    if (exp.guidance.family == GuidanceFamily::kGradient && !exp.continuous_fns.predictor)
      fail("objective", "gradient family requires objective.predictor");
  } else if (kind == "discrete-tabular") {
    exp.continuous = false;
    if (!task.contains("n_states")) fail("task.n_states", "discrete-tabular task requires n_states");
    const int n_states = get_int(task, "task", "n_states");
    if (n_states < 2) fail("task.n_states", "must be >= 2");
    if (!task.contains("data")) fail("task.data", "discrete-tabular task requires a data block");
    auto denoiser =
        std::make_shared<TabularDenoiser>(parse_data(task.at("data"), "task.data", dim, n_states));
    exp.discrete_core = DiscreteCore{steps, denoiser, dim, n_states};

    require_keys(objective, "objective", {"kind"},
                 {"token", "target", "sigma", "class_weights", "target_class", "predictor"});
    const std::string okind = get_string(objective, "objective", "kind");
    if (okind == "token-count") {
      const int token = objective.contains("token") ? get_int(objective, "objective", "token") : 0;
      if (token < 0 || token >= n_states) fail("objective.token", "token out of range");
      const double target = get_number(objective, "objective", "target");
      const double sigma = objective.contains("sigma") ? get_number(objective, "objective", "sigma") : 1.0;
      std::shared_ptr<DiscreteRuleObjective> rule;
      try {
        rule = token_count_rule(token, target, sigma);
      } catch (const std::invalid_argument& e) {
        fail("objective", e.what());
      }
      exp.discrete_fns.objective = rule;
      exp.discrete_mae = [rule, target](const std::vector<int>& x) {
        return std::abs(target - rule->rule_value(x));
      };
    } else if (okind == "classifier-logprob") {
      if (!objective.contains("class_weights"))
        fail("objective.class_weights", "classifier-logprob requires class_weights");
      const auto& cw = objective.at("class_weights");
      if (!cw.is_array() || cw.empty()) fail("objective.class_weights", "expected per-class arrays");
      std::vector<RowMatrix> weights;
      for (std::size_t c = 0; c < cw.size(); ++c)
        weights.push_back(get_weight_matrix(cw.at(c), "objective.class_weights", dim, n_states));
      const int target_class = get_int(objective, "objective", "target_class");
      std::shared_ptr<SoftmaxClassifier> classifier;
      try {
        classifier = std::make_shared<SoftmaxClassifier>(std::move(weights), target_class);
      } catch (const std::invalid_argument& e) {
        fail("objective", e.what());
      }
      exp.discrete_fns.objective = classifier;
      exp.discrete_fns.predictor = classifier;  // exact log-linear form doubles as predictor
    } else {
      fail("objective.kind", "unknown discrete objective '" + okind + "'");
    }

    if (objective.contains("predictor")) {
      const json& pred = objective.at("predictor");
      require_keys(pred, "objective.predictor", {"kind"}, {"weights", "target", "sigma"});
      const std::string pkind = get_string(pred, "objective.predictor", "kind");
      if (pkind == "linear-onehot") {
        RowMatrix w = get_weight_matrix(pred.at("weights"), "objective.predictor.weights", dim, n_states);
        exp.discrete_fns.predictor = linear_onehot_predictor(std::move(w));
      } else if (pkind == "regression-onehot") {
        RowMatrix w = get_weight_matrix(pred.at("weights"), "objective.predictor.weights", dim, n_states);
        const double target = get_number(pred, "objective.predictor", "target");
        const double sigma = pred.contains("sigma") ? get_number(pred, "objective.predictor", "sigma") : 1.0;
        exp.discrete_fns.predictor =
            std::make_shared<RegressionOnehotPredictor>(std::move(w), target, sigma);
      } else {
        fail("objective.predictor.kind", "unknown predictor '" + pkind + "'");
      }
    }
    if (exp.guidance.family == GuidanceFamily::kGradient &&
        exp.guidance.ratio_mode == RatioMode::kTaylor && !exp.discrete_fns.predictor)
      fail("objective", "gradient family requires a differentiable predictor");
  } else {
    fail("task.kind", "expected 'continuous-gmm' or 'discrete-tabular'");
  }

  // Cross-field validity shared by both kinds.
  if (exp.continuous && exp.guidance.family != GuidanceFamily::kSampleDestination &&
      exp.guidance.mc_samples != 1)
    fail("guidance.n", "continuous value functions use the point estimate; set n = 1");
  if (!exp.continuous && exp.guidance.family == GuidanceFamily::kSampleDestination &&
      exp.guidance.dest_iterations != 1)
    fail("guidance.n_iter", "destination iteration applies to continuous cores only");

  // --- search block ---
  const json& search = root.at("search");
  require_keys(search, "search", {"a", "seeds"}, {"parallel"});
  exp.active_size = get_int(search, "search", "a");
  if (exp.active_size < 1) fail("search.a", "must be >= 1");
  const json& seeds = search.at("seeds");
  if (seeds.is_array()) {
    for (const auto& s : seeds) exp.seeds.push_back(s.get<std::uint64_t>());
  } else if (seeds.is_object()) {
    require_keys(seeds, "search.seeds", {"count"}, {"base"});
    const std::uint64_t base = seeds.contains("base") ? seeds.at("base").get<std::uint64_t>() : 0;
    const int count = seeds.at("count").get<int>();
    if (count < 1) fail("search.seeds.count", "must be >= 1");
    for (int i = 0; i < count; ++i) exp.seeds.push_back(base + static_cast<std::uint64_t>(i));
  } else {
    fail("search.seeds", "expected an array or {base, count}");
  }
  if (exp.seeds.empty()) fail("search.seeds", "need at least one seed");
  exp.parallel = get_bool(search, "search", "parallel", false);

  // --- output block ---
  if (root.contains("output")) {
    const json& output = root.at("output");
    require_keys(output, "output", {}, {"dir", "csv", "write_traces"});
    if (output.contains("dir")) exp.output.directory = get_string(output, "output", "dir");
    if (output.contains("csv")) exp.output.csv_name = get_string(output, "output", "csv");
    exp.output.write_traces = get_bool(output, "output", "write_traces", false);
  }

  return exp;
}

Experiment load_experiment(const std::filesystem::path& config_path) {
  std::ifstream in(config_path);
  if (!in) throw ConfigError("config error: cannot open " + config_path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_experiment(buffer.str(), config_path.string());
}

namespace {

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::string format_csv_row(const ResultRow& row) {
  std::ostringstream out;
  out << row.task << ',' << row.family << ',' << row.active_size << ',' << row.branch_size << ','
      << row.mc_samples << ',' << row.seed << ',' << format_double(row.final_fy) << ','
      << format_double(row.mae) << ',' << format_double(row.wall_s) << ',' << row.cost.model_calls
      << ',' << row.cost.pred_calls << ',' << row.cost.backprop_calls;
  return out.str();
}

ResultRow run_single(const Experiment& experiment, std::uint64_t seed, SearchTrace* trace_out) {
  SearchOptions options;
  options.parallel = false;
  options.record_steps = trace_out != nullptr;

  ResultRow row;
  row.task = experiment.task_id;
  row.family = to_string(experiment.guidance.family);
  row.active_size = experiment.active_size;
  row.branch_size = experiment.guidance.branch_size;
  row.mc_samples = experiment.guidance.mc_samples;
  row.seed = seed;
  row.mae = std::numeric_limits<double>::quiet_NaN();

  if (experiment.continuous) {
    auto result = run_tree_search(experiment.continuous_core, experiment.continuous_fns,
                                  experiment.guidance, experiment.active_size, seed, options);
    row.final_fy = result.trace.final_fy;
    row.wall_s = result.trace.wall_seconds;
    row.cost = result.trace.counters;
    if (experiment.continuous_mae) row.mae = experiment.continuous_mae(result.sample);
    if (trace_out) *trace_out = std::move(result.trace);
  } else {
    auto result = run_tree_search(experiment.discrete_core, experiment.discrete_fns,
                                  experiment.guidance, experiment.active_size, seed, options);
    row.final_fy = result.trace.final_fy;
    row.wall_s = result.trace.wall_seconds;
    row.cost = result.trace.counters;
    if (experiment.discrete_mae) row.mae = experiment.discrete_mae(result.sample);
    if (trace_out) *trace_out = std::move(result.trace);
  }
  return row;
}

std::filesystem::path resolve_output_dir(const OutputConfig& output) {
  if (const char* root = std::getenv(kOutputRootEnv); root != nullptr && *root != '\0')
    return std::filesystem::path(root) / output.directory;
  return output.directory;
}

namespace {

void append_rows_csv(const std::filesystem::path& csv_path, const std::vector<ResultRow>& rows) {
  std::filesystem::create_directories(csv_path.parent_path());
  const bool fresh = !std::filesystem::exists(csv_path) || std::filesystem::file_size(csv_path) == 0;
  std::ofstream out(csv_path, std::ios::app);
  if (!out) throw std::runtime_error("cannot open CSV for append: " + csv_path.string());
  if (fresh) out << kCsvHeader << '\n';
  for (const auto& row : rows) out << format_csv_row(row) << '\n';
}

}  // namespace

std::vector<ResultRow> run_experiment(const Experiment& experiment, bool write_outputs) {
  const int n = static_cast<int>(experiment.seeds.size());
  std::vector<ResultRow> rows(static_cast<std::size_t>(n));
  std::vector<SearchTrace> traces;
  const bool want_traces = write_outputs && experiment.output.write_traces;
  if (want_traces) traces.resize(static_cast<std::size_t>(n));

  const auto run_one = [&](int i) {
    rows[static_cast<std::size_t>(i)] = run_single(
        experiment, experiment.seeds[static_cast<std::size_t>(i)],
        want_traces ? &traces[static_cast<std::size_t>(i)] : nullptr);
  };

  if (experiment.parallel && n > 1) {
    const int threads = std::max(1, std::min<int>(static_cast<int>(std::thread::hardware_concurrency()), n));
    std::vector<std::thread> pool;
    for (int w = 0; w < threads; ++w)
      pool.emplace_back([&, w] {
        for (int i = w; i < n; i += threads) run_one(i);
      });
    for (auto& th : pool) th.join();
  } else {
    for (int i = 0; i < n; ++i) run_one(i);
  }

  if (write_outputs) {
    const auto dir = resolve_output_dir(experiment.output);
    std::filesystem::create_directories(dir);
    append_rows_csv(dir / experiment.output.csv_name, rows);
    if (want_traces) {
      for (int i = 0; i < n; ++i) {
        const auto& row = rows[static_cast<std::size_t>(i)];
        std::ostringstream name;
        name << "trace_" << row.task << '_' << row.family << "_seed" << row.seed << ".json";
        std::ofstream out(dir / name.str());
        out << trace_to_json(row, traces[static_cast<std::size_t>(i)]);
      }
    }
  }
  return rows;
}

std::vector<SweepResultRow> run_sweep(const Experiment& experiment, const std::vector<int>& budgets,
                                      bool write_outputs) {
  if (budgets.empty()) throw ConfigError("config error: sweep requires at least one budget");
  SearchOptions options;
  options.parallel = experiment.parallel;

  std::vector<SweepResultRow> rows;
  for (int budget : budgets) {
    std::vector<SweepCell> cells;
    if (experiment.continuous) {
      cells = sweep_fixed_budget(experiment.continuous_core, experiment.continuous_fns,
                                 experiment.guidance, budget, experiment.seeds, options);
    } else {
      cells = sweep_fixed_budget(experiment.discrete_core, experiment.discrete_fns,
                                 experiment.guidance, budget, experiment.seeds, options);
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < cells.size(); ++i)
      if (cells[i].mean_objective > cells[best].mean_objective) best = i;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      SweepResultRow row;
      row.budget = cells[i].budget;
      row.active_size = cells[i].active_size;
      row.branch_size = cells[i].branch_size;
      row.mean_objective = cells[i].mean_objective;
      row.sd_objective = cells[i].sd_objective;
      row.mean_wall_s = cells[i].mean_wall_s;
      row.frontier = (i == best);
      rows.push_back(row);
    }
  }

  if (write_outputs) {
    const auto dir = resolve_output_dir(experiment.output);
    std::filesystem::create_directories(dir);
    const auto path = dir / ("sweep_" + experiment.task_id + ".csv");
    const bool fresh = !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
    std::ofstream out(path, std::ios::app);
    if (fresh) out << "budget,A,K,mean_objective,sd_objective,mean_wall_s,frontier\n";
    for (const auto& row : rows) {
      out << row.budget << ',' << row.active_size << ',' << row.branch_size << ','
          << format_double(row.mean_objective) << ',' << format_double(row.sd_objective) << ','
          << format_double(row.mean_wall_s) << ',' << (row.frontier ? 1 : 0) << '\n';
    }
  }
  return rows;
}

GradcheckReport run_gradcheck(const Experiment& experiment, std::ostream& out) {
  GradcheckReport report;
  if (experiment.continuous) {
    const auto* predictor = experiment.continuous_fns.predictor.get();
    if (predictor == nullptr)
      throw ConfigError("config error: gradcheck requires objective.predictor");
    auto rng = derive_stream(experiment.seeds.front(), stream_purpose::kGumbel);
    double max_rel = 0.0;
    for (int trial = 0; trial < 10; ++trial) {
      std::vector<double> x(static_cast<std::size_t>(experiment.continuous_core.dim));
      rng.fill_normal(x);
      const auto grad = predictor->gradient(x);
      const auto fd = central_difference_gradient(
          [&](std::span<const double> p) { return predictor->evaluate(p); }, x, 1e-4);
      double num = 0.0, den = 0.0;
      for (std::size_t i = 0; i < grad.size(); ++i) {
        num += (grad[i] - fd[i]) * (grad[i] - fd[i]);
        den += fd[i] * fd[i];
      }
      max_rel = std::max(max_rel, den > 0 ? std::sqrt(num / den) : std::sqrt(num));
    }
    report.predictor_fd_max_rel_error = max_rel;
    report.pass = max_rel < 1e-5;
    out << "predictor-vs-finite-difference max relative error: " << max_rel << '\n';
    return report;
  }

  const auto* predictor = experiment.discrete_fns.predictor.get();
  if (predictor == nullptr) throw ConfigError("config error: gradcheck requires a predictor");
  const auto& core = experiment.discrete_core;
  const std::uint64_t seed = experiment.seeds.front();

  // (a) predictor gradient vs central finite differences at random
  // row-stochastic points.
  {
    auto rng = derive_stream(seed, stream_purpose::kGumbel, 1);
    double max_rel = 0.0;
    for (int trial = 0; trial < 10; ++trial) {
      RowMatrix p(core.dim, core.n_states);
      for (int d = 0; d < core.dim; ++d) {
        double sum = 0.0;
        for (int s = 0; s < core.n_states; ++s) {
          p(d, s) = rng.uniform_pos();
          sum += p(d, s);
        }
        for (int s = 0; s < core.n_states; ++s) p(d, s) /= sum;
      }
      const RowMatrix grad = predictor->gradient(p);
      const RowMatrix fd = central_difference_gradient(*predictor, p, 1e-4);
      double num = 0.0, den = 0.0;
      for (std::size_t i = 0; i < grad.data.size(); ++i) {
        num += (grad.data[i] - fd.data[i]) * (grad.data[i] - fd.data[i]);
        den += fd.data[i] * fd.data[i];
      }
      max_rel = std::max(max_rel, den > 0 ? std::sqrt(num / den) : std::sqrt(num));
    }
    report.predictor_fd_max_rel_error = max_rel;
    out << "(a) predictor-vs-finite-difference max relative error: " << max_rel << '\n';
  }

  // (b) straight-through estimator vs the closed-form multilinear expectation
  // gradient. The reference surrogate is linear, where the expectation is
  // multilinear and the estimator is consistent; nonlinear predictors carry
  // an irreducible straight-through bias and are reported separately.
  {
    auto crng = derive_stream(seed, stream_purpose::kGumbel, 2);
    DiscreteSequence x{std::vector<int>(static_cast<std::size_t>(core.dim), kMaskToken), 0.25};
    for (int d = 0; d < core.dim; d += 2)
      x.tokens[static_cast<std::size_t>(d)] =
          static_cast<int>(crng.next_u64() % static_cast<std::uint64_t>(core.n_states));
    // Keep the pattern on-support for arbitrary tables.
    try {
      core.tabular().neighbor_posteriors(x);
    } catch (const std::domain_error&) {
      x.tokens.assign(static_cast<std::size_t>(core.dim), kMaskToken);
    }
    const NeighborPosteriors nb = core.tabular().neighbor_posteriors(x);

    RowMatrix ref_w(core.dim, core.n_states);
    for (double& v : ref_w.data) v = crng.normal();
    const LinearOnehotPredictor reference(ref_w);
    struct PredictorAsObjective final : DiscreteObjective {
      const OnehotPredictor* p;
      int n_states;
      double evaluate(const std::vector<int>& tokens) const override {
        return p->evaluate_tokens(tokens, n_states);
      }
    };
    PredictorAsObjective ref_obj;
    ref_obj.p = &reference;
    ref_obj.n_states = core.n_states;
    const RowMatrix oracle = expected_value_gradient(x, nb, ref_obj);

    // Compare over the entries the guided rates consume: masked dimensions.
    // Saturated point-mass rows of unmasked dimensions carry no gradient
    // signal through the tempered softmax, and their transitions are frozen.
    const auto masked_rel_error = [&](const RowMatrix& est, const RowMatrix& want) {
      double err = 0.0, norm = 0.0;
      for (int d = 0; d < core.dim; ++d) {
        if (x.tokens[static_cast<std::size_t>(d)] != kMaskToken) continue;
        for (int c = 0; c <= core.n_states; ++c) {
          err += (est(d, c) - want(d, c)) * (est(d, c) - want(d, c));
          norm += want(d, c) * want(d, c);
        }
      }
      return norm > 0.0 ? std::sqrt(err / norm) : std::sqrt(err);
    };

    for (int n : {16, 64, 256, 1024}) {
      auto grng = derive_stream(seed, stream_purpose::kGumbel, 3, static_cast<std::uint64_t>(n));
      const RowMatrix est =
          st_gumbel_gradient_from(x, nb, reference, n, experiment.guidance.tau, grng, nullptr);
      const double rel = masked_rel_error(est, oracle);
      report.st_gumbel_rel_error.emplace_back(n, rel);
      out << "(b) straight-through vs closed-form multilinear gradient, N = " << n
          << ": relative error " << rel << '\n';
    }

    if (dynamic_cast<const LinearOnehotPredictor*>(predictor) == nullptr) {
      PredictorAsObjective cfg_obj;
      cfg_obj.p = predictor;
      cfg_obj.n_states = core.n_states;
      const RowMatrix cfg_oracle = expected_value_gradient(x, nb, cfg_obj);
      auto grng = derive_stream(seed, stream_purpose::kGumbel, 3, 1024);
      const RowMatrix est =
          st_gumbel_gradient_from(x, nb, *predictor, 1024, experiment.guidance.tau, grng, nullptr);
      out << "(b*) configured nonlinear predictor at N = 1024: relative deviation "
          << masked_rel_error(est, cfg_oracle)
          << " (straight-through bias; informational)\n";
    }
  }

  // (c) Taylor ratios vs exact ratios on random states.
  {
    auto rng = derive_stream(seed, stream_purpose::kGumbel, 4);
    struct PredictorAsObjective final : DiscreteObjective {
      const OnehotPredictor* p;
      int n_states;
      double evaluate(const std::vector<int>& tokens) const override {
        return p->evaluate_tokens(tokens, n_states);
      }
    };
    PredictorAsObjective pr_obj;
    pr_obj.p = predictor;
    pr_obj.n_states = core.n_states;
    // Each exact value is an enumeration over [S]^D; scale the state count
    // down on large supports to keep the report interactive.
    double support = 1.0;
    for (int d = 0; d < core.dim; ++d) support *= core.n_states;
    const int n_trials = std::max(4, std::min(100, static_cast<int>(100.0 * 729.0 / support)));
    double max_gap = 0.0;
    for (int trial = 0; trial < n_trials; ++trial) {
      DiscreteSequence x{std::vector<int>(static_cast<std::size_t>(core.dim), kMaskToken), 0.5};
      for (int d = 0; d < core.dim; ++d) {
        const auto r = rng.next_u64() % 2;
        if (r == 0)
          x.tokens[static_cast<std::size_t>(d)] =
              static_cast<int>(rng.next_u64() % static_cast<std::uint64_t>(core.n_states));
      }
      NeighborPosteriors nb;
      try {
        nb = core.tabular().neighbor_posteriors(x);
      } catch (const std::domain_error&) {
        continue;  // off-support pattern under this table
      }
      const RowMatrix grad = expected_value_gradient(x, nb, pr_obj);
      const RowMatrix taylor = taylor_ratios(x, grad);
      // Independent route: direct restriction posteriors per edited sequence.
      const auto& table = core.tabular().data();
      const double base_v = enumerated_log_py(tabular_posterior(x, table), pr_obj);
      for (int d = 0; d < core.dim; ++d) {
        if (x.tokens[static_cast<std::size_t>(d)] != kMaskToken) continue;
        for (int j = 0; j < core.n_states; ++j) {
          if (!nb.valid(d, j)) continue;
          DiscreteSequence edited = x;
          edited.tokens[static_cast<std::size_t>(d)] = j;
          const double v = enumerated_log_py(tabular_posterior(edited, table), pr_obj);
          max_gap = std::max(max_gap, std::abs(taylor(d, j) - (v - base_v)));
        }
      }
    }
    report.taylor_exact_max_gap = max_gap;
    out << "(c) taylor-vs-exact max absolute gap over random states: " << max_gap << '\n';
  }

  bool decreasing = true;
  for (std::size_t i = 1; i < report.st_gumbel_rel_error.size(); ++i)
    decreasing = decreasing &&
                 report.st_gumbel_rel_error[i].second <= report.st_gumbel_rel_error[i - 1].second * 1.5;
  const double final_rel = report.st_gumbel_rel_error.back().second;
  report.pass = report.predictor_fd_max_rel_error < 1e-5 && final_rel <= 0.05 && decreasing;
  out << (report.pass ? "gradcheck: PASS" : "gradcheck: FAIL") << '\n';
  return report;
}

std::string trace_to_json(const ResultRow& row, const SearchTrace& trace) {
  json j;
  j["task"] = row.task;
  j["family"] = row.family;
  j["seed"] = row.seed;
  j["final_fy"] = trace.final_fy;
  j["final_member"] = trace.final_member;
  j["wall_seconds"] = trace.wall_seconds;
  j["cost"] = {{"model_calls", trace.counters.model_calls},
               {"pred_calls", trace.counters.pred_calls},
               {"backprop_calls", trace.counters.backprop_calls}};
  json steps = json::array();
  for (const auto& step : trace.steps) {
    json s;
    s["t"] = step.t;
    s["guided"] = step.guided;
    s["candidate_values"] = step.candidate_values;
    json selected = json::array();
    for (const auto& [parent, branch] : step.selected) selected.push_back({parent, branch});
    s["selected"] = selected;
    s["member_values"] = step.member_values;
    steps.push_back(std::move(s));
  }
  j["steps"] = std::move(steps);
  return j.dump(2);
}

}  // namespace treeg
