#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <utility>
#include <vector>

#include "treeg/guidance.hpp"

namespace treeg {

// One inference step of the search: every candidate's value (enumerated
// parent-major, branch-minor), the retained (parent, branch) pairs in
// selection order, and the values of the new active set.
struct SearchStepRecord {
  double t = 0.0;
  bool guided = false;
  std::vector<double> candidate_values;
  std::vector<std::pair<int, int>> selected;
  std::vector<double> member_values;
};

struct SearchTrace {
  std::vector<SearchStepRecord> steps;
  double final_fy = 0.0;
  int final_member = 0;
  CostCounters counters;
  double wall_seconds = 0.0;
};

struct ContinuousSearchResult {
  std::vector<double> sample;
  SearchTrace trace;
};

struct DiscreteSearchResult {
  std::vector<int> sample;
  SearchTrace trace;
};

struct SearchOptions {
  bool parallel = false;  // evaluate candidates concurrently; results identical
  int max_threads = 0;    // 0 = hardware concurrency
  bool record_steps = true;
};

struct ContinuousTaskFns {
  std::shared_ptr<const ContinuousObjective> objective;
  std::shared_ptr<const ContinuousPredictor> predictor;  // gradient family only
};

struct DiscreteTaskFns {
  std::shared_ptr<const DiscreteObjective> objective;
  std::shared_ptr<const OnehotPredictor> predictor;  // gradient family only
};

// Maintains an active set of `active_size` paths, branches each per the
// configured family, keeps the global top-A candidates by value (ties broken
// by ascending parent then branch index), and returns the final active-set
// member maximizing the true objective on clean samples.
//
// A master seed derives one stream per (purpose, step, parent, branch), so
// serial and concurrent execution produce bit-identical results.
ContinuousSearchResult run_tree_search(const ContinuousCore& core, const ContinuousTaskFns& fns,
                                       const GuidanceConfig& config, int active_size,
                                       std::uint64_t seed, const SearchOptions& options = {});
DiscreteSearchResult run_tree_search(const DiscreteCore& core, const DiscreteTaskFns& fns,
                                     const GuidanceConfig& config, int active_size,
                                     std::uint64_t seed, const SearchOptions& options = {});

struct CoreShape {
  bool continuous = false;
  int dim = 0;
  int n_states = 0;
};

// Closed-form cost of a full run under the counting conventions documented on
// CostCounters: per guided step,
//   sample-current:      A model + A*K*(model + N pred)
//   sample-destination:  A model + A*K pred          (times N_iter, continuous)
//   gradient (taylor):   A*K*(model + N pred) + A backprop
//   gradient (exact):    A*(K+1) model + A*N*(K + D*S + 1) pred
// plus A model passes per out-of-window step. Instrumented counters from
// run_tree_search equal this exactly.
CostCounters predict_cost(const GuidanceConfig& config, int active_size, int steps,
                          const CoreShape& shape);

// All (A, K) splits of a power-of-two candidate budget A*K.
std::vector<std::pair<int, int>> budget_factor_pairs(int budget);

struct SweepCell {
  int budget = 0;
  int active_size = 0;
  int branch_size = 0;
  double mean_objective = 0.0;
  double sd_objective = 0.0;
  double mean_wall_s = 0.0;
};

// Runs every (A, K) split of the budget over the given seeds; every row uses
// the same per-step candidate count A*K.
std::vector<SweepCell> sweep_fixed_budget(const ContinuousCore& core,
                                          const ContinuousTaskFns& fns,
                                          const GuidanceConfig& config, int budget,
                                          std::span<const std::uint64_t> seeds,
                                          const SearchOptions& options = {});
std::vector<SweepCell> sweep_fixed_budget(const DiscreteCore& core, const DiscreteTaskFns& fns,
                                          const GuidanceConfig& config, int budget,
                                          std::span<const std::uint64_t> seeds,
                                          const SearchOptions& options = {});

}  // namespace treeg
