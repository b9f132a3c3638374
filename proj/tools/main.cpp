// treeg: tree-search path-steering guidance for diffusion and masked-flow
// sampling on desk-scale analytic models.
//
// Subcommands:
//   verify              run the exact-identity and oracle checks
//   run <config>        run the configured search per seed, append CSV rows
//   sweep <config>      fixed-budget (A, K) sweeps, emit sweep CSV
//   gradcheck <config>  gradient-estimator quality report
//
// Exit codes: 0 success, 1 check failure, 2 configuration error.

#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "treeg/harness.hpp"
#include "treeg/verify.hpp"

namespace {

int cmd_verify() {
  const auto results = treeg::run_verification_suite();
  const bool ok = treeg::report_verification(results, std::cout);
  std::cout << (ok ? "verify: all checks passed" : "verify: FAILURES") << std::endl;
  return ok ? 0 : 1;
}

int cmd_run(const std::string& config_path) {
  const auto experiment = treeg::load_experiment(config_path);
  const auto rows = treeg::run_experiment(experiment);
  const auto dir = treeg::resolve_output_dir(experiment.output);
  std::cout << treeg::kCsvHeader << '\n';
  for (const auto& row : rows) std::cout << treeg::format_csv_row(row) << '\n';
  std::cout << "wrote " << rows.size() << " rows to " << (dir / experiment.output.csv_name).string()
            << std::endl;
  return 0;
}

int cmd_sweep(const std::string& config_path, const std::vector<int>& budgets) {
  const auto experiment = treeg::load_experiment(config_path);
  const auto rows = treeg::run_sweep(experiment, budgets);
  std::cout << "budget,A,K,mean_objective,sd_objective,mean_wall_s,frontier\n";
  for (const auto& row : rows) {
    std::cout << row.budget << ',' << row.active_size << ',' << row.branch_size << ','
              << row.mean_objective << ',' << row.sd_objective << ',' << row.mean_wall_s << ','
              << (row.frontier ? 1 : 0) << '\n';
  }
  return 0;
}

int cmd_gradcheck(const std::string& config_path) {
  const auto experiment = treeg::load_experiment(config_path);
  const auto report = treeg::run_gradcheck(experiment, std::cout);
  return report.pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tree-search path-steering guidance sampler"};
  app.require_subcommand(1);

  auto* verify = app.add_subcommand("verify", "run invariant and oracle checks");

  std::string run_config;
  auto* run = app.add_subcommand("run", "run the configured experiment");
  run->add_option("config", run_config, "experiment config file")->required();

  std::string sweep_config;
  std::vector<int> budgets;
  auto* sweep = app.add_subcommand("sweep", "fixed-budget (A, K) sweep");
  sweep->add_option("config", sweep_config, "experiment config file")->required();
  sweep->add_option("--budgets", budgets, "candidate budgets A*K (powers of two)")
      ->required()
      ->expected(-1);

  std::string grad_config;
  auto* gradcheck = app.add_subcommand("gradcheck", "gradient estimator report");
  gradcheck->add_option("config", grad_config, "experiment config file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (verify->parsed()) return cmd_verify();
    if (run->parsed()) return cmd_run(run_config);
    if (sweep->parsed()) return cmd_sweep(sweep_config, budgets);
    if (gradcheck->parsed()) return cmd_gradcheck(grad_config);
  } catch (const treeg::ConfigError& e) {
    std::cerr << e.what() << std::endl;
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  }
  return 0;
}
