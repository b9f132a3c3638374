#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "treeg/harness.hpp"
#include "treeg/verify.hpp"

using namespace treeg;

namespace {

std::string small_discrete_config(const std::string& out_dir,
                                  const std::string& extra_guidance = "") {
  return R"({
    "task": {
      "id": "toy",
      "kind": "discrete-tabular",
      "dim": 3,
      "n_states": 3,
      "data": {"family": "count-weighted", "token": 0, "theta": 1.0}
    },
    "schedule": {"kind": "linear-alphabar", "steps": 8},
    "objective": {"kind": "token-count", "token": 0, "target": 2, "sigma": 1.0},
    "guidance": {"family": "sample-current", "k": 2, "n": 4)" +
         extra_guidance + R"(},
    "search": {"a": 1, "seeds": [3, 4]},
    "output": {"dir": ")" + out_dir + R"(", "csv": "rows.csv"}
  })";
}

std::filesystem::path fresh_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "treeg_tests" / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("parse a full experiment config") {
  const auto dir = fresh_dir("parse");
  const auto exp = parse_experiment(small_discrete_config(dir.string()));
  CHECK(exp.task_id == "toy");
  CHECK_FALSE(exp.continuous);
  CHECK(exp.discrete_core.dim == 3);
  CHECK(exp.discrete_core.n_states == 3);
  CHECK(exp.discrete_core.steps == 8);
  CHECK(exp.guidance.family == GuidanceFamily::kSampleCurrent);
  CHECK(exp.guidance.branch_size == 2);
  CHECK(exp.guidance.mc_samples == 4);
  CHECK(exp.seeds == std::vector<std::uint64_t>{3, 4});
  CHECK(exp.output.csv_name == "rows.csv");
}

TEST_CASE("unknown keys are rejected with a field path") {
  const std::string bad = R"({
    "task": {"id": "x", "kind": "discrete-tabular", "dim": 2, "n_states": 2,
             "data": {"family": "uniform"}, "typo_key": 1},
    "schedule": {"kind": "linear-alphabar", "steps": 4},
    "objective": {"kind": "token-count", "target": 1},
    "guidance": {"family": "sample-current"},
    "search": {"a": 1, "seeds": [1]}
  })";
  try {
    parse_experiment(bad);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    const std::string message = e.what();
    CHECK(message.find("task.typo_key") != std::string::npos);
    CHECK(message.find("unknown key") != std::string::npos);
  }
}

TEST_CASE("cross-field violations are rejected") {
  // Continuous task with a discrete objective kind.
  const std::string bad = R"({
    "task": {"kind": "continuous-gmm", "dim": 2,
             "gmm": {"weights": [1.0], "means": [0.0], "variances": [1.0]}},
    "schedule": {"kind": "linear-alphabar", "steps": 4},
    "objective": {"kind": "token-count", "target": 1},
    "guidance": {"family": "sample-current"},
    "search": {"a": 1, "seeds": [1]}
  })";
  CHECK_THROWS_AS(parse_experiment(bad), ConfigError);

  // Monte-Carlo value on a continuous core (the point estimate is forced).
  const std::string bad_n = R"({
    "task": {"kind": "continuous-gmm", "dim": 2,
             "gmm": {"weights": [1.0], "means": [0.0], "variances": [1.0]}},
    "schedule": {"kind": "linear-alphabar", "steps": 4},
    "objective": {"kind": "count-above-threshold", "target": 1},
    "guidance": {"family": "sample-current", "n": 4},
    "search": {"a": 1, "seeds": [1]}
  })";
  CHECK_THROWS_AS(parse_experiment(bad_n), ConfigError);

  // Pairing discipline: destination family with the current-state evaluator.
  const auto dir = fresh_dir("pairing");
  CHECK_THROWS_AS(
      parse_experiment(small_discrete_config(dir.string(), R"(, "value_function": "destination")")),
      ConfigError);
}

TEST_CASE("csv rows are schema-stable and reproducible") {
  const auto dir = fresh_dir("csv");
  const auto exp = parse_experiment(small_discrete_config(dir.string()));
  const auto row_a = run_single(exp, 3);
  const auto row_b = run_single(exp, 3);
  const auto text_a = format_csv_row(row_a);
  const auto text_b = format_csv_row(row_b);
  // All numeric columns except wall time must match exactly.
  const auto strip_wall = [](std::string s) {
    // columns: task,family,A,K,N,seed,final_fy,mae,wall_s,...
    std::vector<std::string> cols;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) cols.push_back(item);
    cols[8] = "-";
    std::string out;
    for (const auto& c : cols) out += c + ",";
    return out;
  };
  CHECK(strip_wall(text_a) == strip_wall(text_b));
  CHECK(std::string(kCsvHeader) ==
        "task,family,A,K,N,seed,final_fy,mae,wall_s,model_calls,pred_calls,backprop_calls");

  // Cost columns equal the closed-form prediction.
  const auto predicted = predict_cost(exp.guidance, exp.active_size, exp.total_steps(), exp.shape());
  CHECK(row_a.cost == predicted);
}

TEST_CASE("run_experiment appends rows and writes traces on request") {
  const auto dir = fresh_dir("run");
  auto exp = parse_experiment(small_discrete_config(dir.string()));
  exp.output.write_traces = true;
  const auto rows = run_experiment(exp);
  REQUIRE(rows.size() == 2);

  const auto csv_path = dir / "rows.csv";
  REQUIRE(std::filesystem::exists(csv_path));
  std::ifstream in(csv_path);
  std::string line;
  std::getline(in, line);
  CHECK(line == kCsvHeader);
  int data_lines = 0;
  while (std::getline(in, line))
    if (!line.empty()) ++data_lines;
  CHECK(data_lines == 2);

  CHECK(std::filesystem::exists(dir / "trace_toy_sample-current_seed3.json"));
  CHECK(std::filesystem::exists(dir / "trace_toy_sample-current_seed4.json"));

  // Appending: a second run doubles the data lines and keeps one header.
  run_experiment(exp);
  std::ifstream again(csv_path);
  int headers = 0, total = 0;
  while (std::getline(again, line)) {
    if (line == kCsvHeader) ++headers;
    if (!line.empty()) ++total;
  }
  CHECK(headers == 1);
  CHECK(total == 5);
}

TEST_CASE("output root environment variable relocates outputs") {
  const auto root = fresh_dir("envroot");
  setenv(kOutputRootEnv, root.string().c_str(), 1);
  OutputConfig out;
  out.directory = "nested";
  CHECK(resolve_output_dir(out) == root / "nested");
  unsetenv(kOutputRootEnv);
  CHECK(resolve_output_dir(out) == std::filesystem::path("nested"));
}

TEST_CASE("sweep emits one row per factor pair and marks the frontier") {
  const auto dir = fresh_dir("sweep");
  auto exp = parse_experiment(small_discrete_config(dir.string()));
  const auto rows = run_sweep(exp, {1, 4});
  REQUIRE(rows.size() == 1 + 3);
  CHECK(rows[0].budget == 1);
  CHECK(rows[0].frontier);
  int frontier_count = 0;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    CHECK(rows[i].budget == 4);
    frontier_count += rows[i].frontier ? 1 : 0;
  }
  CHECK(frontier_count == 1);
  CHECK(std::filesystem::exists(dir / "sweep_toy.csv"));
}

TEST_CASE("gradcheck passes on the shipped classifier toy") {
  const std::string config = R"({
    "task": {
      "id": "clf",
      "kind": "discrete-tabular",
      "dim": 3,
      "n_states": 3,
      "data": {"family": "count-weighted", "token": 1, "theta": 0.8}
    },
    "schedule": {"kind": "linear-alphabar", "steps": 8},
    "objective": {
      "kind": "classifier-logprob",
      "class_weights": [[1.5, 0.0, 0.0], [0.0, 1.2, 0.6], [0.0, 0.4, 1.0]],
      "target_class": 1
    },
    "guidance": {"family": "gradient", "k": 1, "n": 16, "gamma": 5.0},
    "search": {"a": 1, "seeds": [0]}
  })";
  const auto exp = parse_experiment(config);
  std::ostringstream log;
  const auto report = run_gradcheck(exp, log);
  CHECK(report.pass);
  CHECK(report.predictor_fd_max_rel_error < 1e-5);
  REQUIRE_FALSE(report.st_gumbel_rel_error.empty());
  CHECK(report.st_gumbel_rel_error.back().first == 1024);
  CHECK(report.st_gumbel_rel_error.back().second <= 0.05);
}

TEST_CASE("gradcheck reports taylor exactness for a linear predictor") {
  const std::string config = R"({
    "task": {
      "id": "lin",
      "kind": "discrete-tabular",
      "dim": 3,
      "n_states": 3,
      "data": {"family": "count-weighted", "token": 0, "theta": 0.9}
    },
    "schedule": {"kind": "linear-alphabar", "steps": 8},
    "objective": {"kind": "token-count", "token": 0, "target": 2,
                  "predictor": {"kind": "linear-onehot", "weights": [1.0, -0.5, 0.25]}},
    "guidance": {"family": "gradient", "k": 1, "n": 16},
    "search": {"a": 1, "seeds": [0]}
  })";
  const auto exp = parse_experiment(config);
  std::ostringstream log;
  const auto report = run_gradcheck(exp, log);
  CHECK(report.taylor_exact_max_gap <= 1e-10);
}

TEST_CASE("the full verification suite is green") {
  const auto results = run_verification_suite();
  std::ostringstream log;
  CHECK(report_verification(results, log));
}

#ifdef TREEG_CLI_PATH
TEST_CASE("cli exit codes: 0 on success, 2 on config errors") {
  const std::string cli = TREEG_CLI_PATH;
  const int ok = std::system((cli + " verify > /dev/null 2>&1").c_str());
  CHECK(WEXITSTATUS(ok) == 0);
  const int bad = std::system((cli + " run /nonexistent/config.json > /dev/null 2>&1").c_str());
  CHECK(WEXITSTATUS(bad) == 2);

  const auto dir = fresh_dir("cli");
  const auto bad_config = dir / "bad.json";
  std::ofstream(bad_config) << "{\"task\": {}}";
  const int invalid = std::system((cli + " run " + bad_config.string() + " > /dev/null 2>&1").c_str());
  CHECK(WEXITSTATUS(invalid) == 2);
}
#endif
