#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "treeg/search.hpp"

namespace treeg {

// Configuration problems carry a field path and map to CLI exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct OutputConfig {
  std::filesystem::path directory = "out";
  std::string csv_name = "results.csv";
  bool write_traces = false;
};

// A fully constructed experiment: live core + objective objects plus the
// search and output settings from one config file.
struct Experiment {
  std::string task_id;
  bool continuous = false;

  std::shared_ptr<NoiseSchedule> schedule;  // owned; cores point into it
  ContinuousCore continuous_core;
  ContinuousTaskFns continuous_fns;
  DiscreteCore discrete_core;
  DiscreteTaskFns discrete_fns;

  GuidanceConfig guidance;
  int active_size = 1;
  std::vector<std::uint64_t> seeds;
  bool parallel = false;
  OutputConfig output;

  // |target - rule(x)| for rule-backed objectives; NaN otherwise.
  std::function<double(std::span<const double>)> continuous_mae;
  std::function<double(const std::vector<int>&)> discrete_mae;

  CoreShape shape() const {
    return continuous ? CoreShape{true, continuous_core.dim, 0}
                      : CoreShape{false, discrete_core.dim, discrete_core.n_states};
  }
  int total_steps() const {
    return continuous ? schedule->steps() : discrete_core.steps;
  }
};

// Parses and validates a config file. Unknown keys, missing keys, and
// cross-field violations raise ConfigError with the offending field path.
Experiment load_experiment(const std::filesystem::path& config_path);
Experiment parse_experiment(const std::string& json_text, const std::string& origin = "<inline>");

// One CSV row per (config, seed) run.
struct ResultRow {
  std::string task;
  std::string family;
  int active_size = 1;
  int branch_size = 1;
  int mc_samples = 1;
  std::uint64_t seed = 0;
  double final_fy = 0.0;
  double mae = 0.0;
  double wall_s = 0.0;
  CostCounters cost;
};

inline constexpr const char* kCsvHeader =
    "task,family,A,K,N,seed,final_fy,mae,wall_s,model_calls,pred_calls,backprop_calls";

std::string format_csv_row(const ResultRow& row);

// Runs one seed of the experiment.
ResultRow run_single(const Experiment& experiment, std::uint64_t seed,
                     SearchTrace* trace_out = nullptr);

// Runs every configured seed (concurrently when experiment.parallel), appends
// rows to the CSV, and optionally writes one JSON trace per run. Returns the
// rows in seed order.
std::vector<ResultRow> run_experiment(const Experiment& experiment, bool write_outputs = true);

// Environment variable overriding the output root directory.
inline constexpr const char* kOutputRootEnv = "TREEG_OUTPUT_ROOT";
std::filesystem::path resolve_output_dir(const OutputConfig& output);

// Fixed-budget sweep rows as written by the sweep CSV, including the
// per-budget frontier marking.
struct SweepResultRow {
  int budget = 0;
  int active_size = 0;
  int branch_size = 0;
  double mean_objective = 0.0;
  double sd_objective = 0.0;
  double mean_wall_s = 0.0;
  bool frontier = false;
};

std::vector<SweepResultRow> run_sweep(const Experiment& experiment,
                                      const std::vector<int>& budgets,
                                      bool write_outputs = true);

// Gradient-quality report: predictor-vs-finite-difference error, the
// straight-through estimator error against the closed-form expectation
// gradient over a Monte-Carlo ladder, and the Taylor-vs-exact ratio gap.
struct GradcheckReport {
  double predictor_fd_max_rel_error = 0.0;
  std::vector<std::pair<int, double>> st_gumbel_rel_error;  // (N, relative error)
  double taylor_exact_max_gap = 0.0;
  bool pass = false;
};

GradcheckReport run_gradcheck(const Experiment& experiment, std::ostream& out);

std::string trace_to_json(const ResultRow& row, const SearchTrace& trace);

}  // namespace treeg
