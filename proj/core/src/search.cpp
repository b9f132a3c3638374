#include "treeg/search.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <thread>

namespace treeg {

namespace {

// Static partition over [0, n); each index writes only to its own slots, so
// serial and threaded execution are bit-identical.
template <class Fn>
void parallel_for(int n, const SearchOptions& options, const Fn& fn) {
  if (!options.parallel || n < 2) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  int threads = options.max_threads > 0 ? options.max_threads
                                        : static_cast<int>(std::thread::hardware_concurrency());
  threads = std::max(1, std::min(threads, n));
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(threads));
  for (int w = 0; w < threads; ++w) {
    pool.emplace_back([&, w] {
      for (int i = w; i < n; i += threads) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

// Indices of the top `keep` candidates by value; ties break by ascending
// (parent, branch).
std::vector<int> select_top(const std::vector<double>& values,
                            const std::vector<std::pair<int, int>>& ids, int keep) {
  std::vector<int> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (values[static_cast<std::size_t>(a)] != values[static_cast<std::size_t>(b)])
      return values[static_cast<std::size_t>(a)] > values[static_cast<std::size_t>(b)];
    return ids[static_cast<std::size_t>(a)] < ids[static_cast<std::size_t>(b)];
  });
  order.resize(static_cast<std::size_t>(std::min<std::size_t>(static_cast<std::size_t>(keep), order.size())));
  return order;
}

void check_common(const GuidanceConfig& config, int active_size) {
  config.validate();
  if (active_size < 1) throw std::invalid_argument("invalid-configuration: A must be >= 1");
}

}  // namespace

// ----------------------------- continuous ----------------------------------

ContinuousSearchResult run_tree_search(const ContinuousCore& core, const ContinuousTaskFns& fns,
                                       const GuidanceConfig& config, int active_size,
                                       std::uint64_t seed, const SearchOptions& options) {
  check_common(config, active_size);
  if (!fns.objective) throw std::invalid_argument("invalid-configuration: objective required");
  if (config.family == GuidanceFamily::kGradient && !fns.predictor)
    throw std::invalid_argument(
        "invalid-configuration: gradient family requires a differentiable predictor");
  if (config.family != GuidanceFamily::kSampleDestination && config.mc_samples != 1)
    throw std::invalid_argument(
        "invalid-configuration: continuous value functions use the point estimate; set n = 1");
  if (config.family == GuidanceFamily::kGradient && config.ratio_mode != RatioMode::kTaylor)
    throw std::invalid_argument("invalid-configuration: ratio mode applies to discrete cores only");

  const auto t_start = std::chrono::steady_clock::now();
  const NoiseSchedule& schedule = *core.schedule;
  const int total_steps = schedule.steps();
  const int K = config.branch_size;

  std::vector<std::vector<double>> members(static_cast<std::size_t>(active_size));
  for (int i = 0; i < active_size; ++i) {
    auto rng = derive_stream(seed, stream_purpose::kInit, 0, static_cast<std::uint64_t>(i));
    members[static_cast<std::size_t>(i)].resize(static_cast<std::size_t>(core.dim));
    rng.fill_normal(members[static_cast<std::size_t>(i)]);
  }

  SearchTrace trace;
  CostCounters counters;

  for (int step = 0; step < total_steps; ++step) {
    const double t = schedule.time(step);
    const bool guided = config.in_window(t);

    if (!guided) {
      std::vector<std::vector<double>> next(static_cast<std::size_t>(active_size));
      std::vector<CostCounters> slot(static_cast<std::size_t>(active_size));
      parallel_for(active_size, options, [&](int i) {
        auto rng = derive_stream(seed, stream_purpose::kStepNoise, static_cast<std::uint64_t>(step),
                                 static_cast<std::uint64_t>(i), 0);
        const ContinuousState x{members[static_cast<std::size_t>(i)], t};
        const auto cand = branch_out_current(x, core, rng, &slot[static_cast<std::size_t>(i)]);
        next[static_cast<std::size_t>(i)] = cand.next.x;
      });
      for (const auto& s : slot) counters += s;
      members = std::move(next);
      if (options.record_steps) trace.steps.push_back({t, false, {}, {}, {}});
      continue;
    }

    const StepCoeffs coeffs = schedule.coeffs(step);
    const int per_member = config.family == GuidanceFamily::kSampleDestination ? 1 : K;
    const int n_candidates = active_size * per_member;
    const double next_t = schedule.time(step + 1);

    // Per-member context: the parent model pass and, for the gradient family,
    // the guidance direction.
    struct Ctx {
      std::vector<double> xhat;
      std::vector<double> drift;  // gamma * grad, gradient family only
    };
    std::vector<Ctx> ctx(static_cast<std::size_t>(active_size));
    std::vector<CostCounters> ctx_slot(static_cast<std::size_t>(active_size));
    if (config.family != GuidanceFamily::kSampleDestination) {
      parallel_for(active_size, options, [&](int i) {
        const ContinuousState x{members[static_cast<std::size_t>(i)], t};
        auto& c = ctx[static_cast<std::size_t>(i)];
        if (config.family == GuidanceFamily::kSampleCurrent) {
          ctx_slot[static_cast<std::size_t>(i)].model_calls += 1;
          c.xhat = core.denoiser->predict_x1(x.x, t);
        } else {
          // Gradient bundle: parent pass + predictor gradient + sensitivity,
          // all inside one backprop unit.
          ctx_slot[static_cast<std::size_t>(i)].backprop_calls += 1;
          c.xhat = core.denoiser->predict_x1(x.x, t);
          std::vector<double> grad;
          if (core.denoiser->has_vjp()) {
            grad = core.denoiser->vjp(x.x, t, fns.predictor->gradient(c.xhat));
          } else {
            double norm = 0.0;
            for (double v : x.x) norm += v * v;
            const double fd_step = 1e-5 * std::sqrt(norm) + 1e-8;
            grad = central_difference_gradient(
                [&](std::span<const double> p) {
                  return fns.predictor->evaluate(core.denoiser->predict_x1(p, t));
                },
                x.x, fd_step);
          }
          const double gamma = config.gamma_at(t);
          c.drift.resize(grad.size());
          for (std::size_t j = 0; j < grad.size(); ++j) c.drift[j] = gamma * grad[j];
        }
      });
    }
    for (const auto& s : ctx_slot) counters += s;

    std::vector<std::vector<double>> cand_state(static_cast<std::size_t>(n_candidates));
    std::vector<double> cand_value(static_cast<std::size_t>(n_candidates));
    std::vector<std::pair<int, int>> cand_id(static_cast<std::size_t>(n_candidates));
    std::vector<CostCounters> cand_slot(static_cast<std::size_t>(n_candidates));

    parallel_for(n_candidates, options, [&](int idx) {
      const int i = idx / per_member;
      const int j = idx % per_member;
      cand_id[static_cast<std::size_t>(idx)] = {i, j};
      const ContinuousState x{members[static_cast<std::size_t>(i)], t};
      auto& slot = cand_slot[static_cast<std::size_t>(idx)];

      if (config.family == GuidanceFamily::kSampleDestination) {
        auto rng = derive_stream(seed, stream_purpose::kDestination, static_cast<std::uint64_t>(step),
                                 static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(j));
        auto cand = branch_out_destination_continuous(x, core, *fns.objective, config, rng, &slot);
        cand_state[static_cast<std::size_t>(idx)] = std::move(cand.next.x);
        cand_value[static_cast<std::size_t>(idx)] = cand.value;
        return;
      }

      auto rng = derive_stream(seed, stream_purpose::kStepNoise, static_cast<std::uint64_t>(step),
                               static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(j));
      const auto& c = ctx[static_cast<std::size_t>(i)];
      std::vector<double> next(static_cast<std::size_t>(core.dim));
      for (std::size_t e = 0; e < next.size(); ++e) {
        const double drift = c.drift.empty() ? 0.0 : c.drift[e];
        next[e] = drift + coeffs.c1 * x.x[e] + coeffs.c2 * c.xhat[e] + coeffs.sigma * rng.normal();
      }
      auto vrng = derive_stream(seed, stream_purpose::kValueMc, static_cast<std::uint64_t>(step),
                                static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(j));
      const ContinuousState cand{next, next_t};
      cand_value[static_cast<std::size_t>(idx)] = value_current(cand, core, *fns.objective, vrng, &slot);
      cand_state[static_cast<std::size_t>(idx)] = std::move(next);
    });
    for (const auto& s : cand_slot) counters += s;

    const auto keep = select_top(cand_value, cand_id, active_size);
    SearchStepRecord rec;
    rec.t = t;
    rec.guided = true;
    for (const int idx : keep) {
      rec.selected.push_back(cand_id[static_cast<std::size_t>(idx)]);
      rec.member_values.push_back(cand_value[static_cast<std::size_t>(idx)]);
    }
    // The retained candidates re-enter the active set in (parent, branch)
    // order, so with K = 1 every path keeps its slot and the search is
    // exactly A independent rollouts with a final argmax.
    auto kept_sorted = keep;
    std::sort(kept_sorted.begin(), kept_sorted.end(), [&](int a, int b) {
      return cand_id[static_cast<std::size_t>(a)] < cand_id[static_cast<std::size_t>(b)];
    });
    std::vector<std::vector<double>> next_members(static_cast<std::size_t>(active_size));
    for (int r = 0; r < active_size; ++r)
      next_members[static_cast<std::size_t>(r)] =
          std::move(cand_state[static_cast<std::size_t>(kept_sorted[static_cast<std::size_t>(r)])]);
    members = std::move(next_members);
    if (options.record_steps) {
      rec.candidate_values = std::move(cand_value);
      trace.steps.push_back(std::move(rec));
    }
  }

  // Final report: argmax of the true objective over the active set.
  int best = 0;
  double best_fy = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < active_size; ++i) {
    const double fy = fns.objective->evaluate(members[static_cast<std::size_t>(i)]);
    if (fy > best_fy) {
      best_fy = fy;
      best = i;
    }
  }
  trace.final_fy = best_fy;
  trace.final_member = best;
  trace.counters = counters;
  trace.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return {members[static_cast<std::size_t>(best)], std::move(trace)};
}

// ------------------------------ discrete -----------------------------------

DiscreteSearchResult run_tree_search(const DiscreteCore& core, const DiscreteTaskFns& fns,
                                     const GuidanceConfig& config, int active_size,
                                     std::uint64_t seed, const SearchOptions& options) {
  check_common(config, active_size);
  if (!fns.objective) throw std::invalid_argument("invalid-configuration: objective required");
  if (config.family == GuidanceFamily::kGradient && config.ratio_mode == RatioMode::kTaylor &&
      !fns.predictor)
    throw std::invalid_argument(
        "invalid-configuration: gradient family requires a differentiable predictor");
  if (config.family == GuidanceFamily::kSampleDestination && config.dest_iterations != 1)
    throw std::invalid_argument(
        "invalid-configuration: destination iteration applies to continuous cores only");

  const auto t_start = std::chrono::steady_clock::now();
  const int total_steps = core.steps;
  const double dt = core.dt();
  const int K = config.branch_size;
  const int N = config.mc_samples;

  std::vector<std::vector<int>> members(
      static_cast<std::size_t>(active_size),
      std::vector<int>(static_cast<std::size_t>(core.dim), kMaskToken));

  SearchTrace trace;
  CostCounters counters;

  for (int step = 0; step < total_steps; ++step) {
    const double t = static_cast<double>(step) / total_steps;
    const bool guided = config.in_window(t);

    if (!guided) {
      std::vector<std::vector<int>> next(static_cast<std::size_t>(active_size));
      std::vector<CostCounters> slot(static_cast<std::size_t>(active_size));
      parallel_for(active_size, options, [&](int i) {
        auto rng = derive_stream(seed, stream_purpose::kStepNoise, static_cast<std::uint64_t>(step),
                                 static_cast<std::uint64_t>(i), 0);
        const DiscreteSequence x{members[static_cast<std::size_t>(i)], t};
        const auto cand = branch_out_current(x, core, rng, &slot[static_cast<std::size_t>(i)]);
        next[static_cast<std::size_t>(i)] = cand.next.tokens;
      });
      for (const auto& s : slot) counters += s;
      members = std::move(next);
      if (options.record_steps) trace.steps.push_back({t, false, {}, {}, {}});
      continue;
    }

    struct Ctx {
      RowMatrix prediction;
      RateSpec rates;  // current/gradient families
    };
    std::vector<Ctx> ctx(static_cast<std::size_t>(active_size));
    std::vector<CostCounters> ctx_slot(static_cast<std::size_t>(active_size));
    parallel_for(active_size, options, [&](int i) {
      const DiscreteSequence x{members[static_cast<std::size_t>(i)], t};
      auto& c = ctx[static_cast<std::size_t>(i)];
      auto& slot = ctx_slot[static_cast<std::size_t>(i)];
      switch (config.family) {
        case GuidanceFamily::kSampleCurrent:
          slot.model_calls += 1;
          c.prediction = core.denoiser->predict(x);
          c.rates = model_rate_from_prediction(x, c.prediction, t);
          break;
        case GuidanceFamily::kSampleDestination:
          slot.model_calls += 1;
          c.prediction = core.denoiser->predict(x);
          break;
        case GuidanceFamily::kGradient: {
          const NeighborPosteriors nb = core.tabular().neighbor_posteriors(x);
          c.prediction = nb.base;
          RowMatrix ratios;
          if (config.ratio_mode == RatioMode::kTaylor) {
            auto grng = derive_stream(seed, stream_purpose::kGumbel, static_cast<std::uint64_t>(step),
                                      static_cast<std::uint64_t>(i), 0);
            const RowMatrix grad =
                st_gumbel_gradient_from(x, nb, *fns.predictor, N, config.tau, grng, &slot);
            ratios = taylor_ratios(x, grad);
          } else {
            slot.model_calls += 1;  // the parent pass, no backprop bundle here
            auto rrng = derive_stream(seed, stream_purpose::kGumbel, static_cast<std::uint64_t>(step),
                                      static_cast<std::uint64_t>(i), 0);
            ratios = exact_ratios_from(x, nb, *fns.objective, N, rrng, &slot);
          }
          c.rates = guided_rate(model_rate_from_prediction(x, nb.base, t), ratios,
                                config.gamma_at(t));
          break;
        }
      }
    });
    for (const auto& s : ctx_slot) counters += s;

    const int n_candidates = active_size * K;
    std::vector<std::vector<int>> cand_state(static_cast<std::size_t>(n_candidates));
    std::vector<double> cand_value(static_cast<std::size_t>(n_candidates));
    std::vector<std::pair<int, int>> cand_id(static_cast<std::size_t>(n_candidates));
    std::vector<CostCounters> cand_slot(static_cast<std::size_t>(n_candidates));

    parallel_for(n_candidates, options, [&](int idx) {
      const int i = idx / K;
      const int j = idx % K;
      cand_id[static_cast<std::size_t>(idx)] = {i, j};
      const DiscreteSequence x{members[static_cast<std::size_t>(i)], t};
      auto& slot = cand_slot[static_cast<std::size_t>(idx)];
      auto step_rng = derive_stream(seed, stream_purpose::kStepNoise, static_cast<std::uint64_t>(step),
                                    static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(j));

      if (config.family == GuidanceFamily::kSampleDestination) {
        auto drng = derive_stream(seed, stream_purpose::kDestination, static_cast<std::uint64_t>(step),
                                  static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(j));
        const std::vector<int> destination = draw_x1(ctx[static_cast<std::size_t>(i)].prediction, drng);
        RateSpec rates;
        rates.dim = core.dim;
        rates.n_states = core.n_states;
        rates.rows.resize(static_cast<std::size_t>(core.dim));
        const double inv = 1.0 / (1.0 - t);
        for (int d = 0; d < core.dim; ++d) {
          if (x.tokens[static_cast<std::size_t>(d)] != kMaskToken) continue;
          auto& row = rates.rows[static_cast<std::size_t>(d)];
          row.assign(static_cast<std::size_t>(core.n_states), 0.0);
          row[static_cast<std::size_t>(destination[static_cast<std::size_t>(d)])] = inv;
        }
        cand_state[static_cast<std::size_t>(idx)] = euler_step(x, rates, dt, step_rng).tokens;
        slot.pred_calls += 1;
        cand_value[static_cast<std::size_t>(idx)] = fns.objective->evaluate(destination);
        return;
      }

      const DiscreteSequence next = euler_step(x, ctx[static_cast<std::size_t>(i)].rates, dt, step_rng);
      auto vrng = derive_stream(seed, stream_purpose::kValueMc, static_cast<std::uint64_t>(step),
                                static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(j));
      cand_value[static_cast<std::size_t>(idx)] =
          value_current(next, core, *fns.objective, N, vrng, &slot);
      cand_state[static_cast<std::size_t>(idx)] = next.tokens;
    });
    for (const auto& s : cand_slot) counters += s;

    const auto keep = select_top(cand_value, cand_id, active_size);
    SearchStepRecord rec;
    rec.t = t;
    rec.guided = true;
    for (const int idx : keep) {
      rec.selected.push_back(cand_id[static_cast<std::size_t>(idx)]);
      rec.member_values.push_back(cand_value[static_cast<std::size_t>(idx)]);
    }
    auto kept_sorted = keep;
    std::sort(kept_sorted.begin(), kept_sorted.end(), [&](int a, int b) {
      return cand_id[static_cast<std::size_t>(a)] < cand_id[static_cast<std::size_t>(b)];
    });
    std::vector<std::vector<int>> next_members(static_cast<std::size_t>(active_size));
    for (int r = 0; r < active_size; ++r)
      next_members[static_cast<std::size_t>(r)] =
          std::move(cand_state[static_cast<std::size_t>(kept_sorted[static_cast<std::size_t>(r)])]);
    members = std::move(next_members);
    if (options.record_steps) {
      rec.candidate_values = std::move(cand_value);
      trace.steps.push_back(std::move(rec));
    }
  }

  int best = 0;
  double best_fy = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < active_size; ++i) {
    const double fy = fns.objective->evaluate(members[static_cast<std::size_t>(i)]);
    if (fy > best_fy) {
      best_fy = fy;
      best = i;
    }
  }
  trace.final_fy = best_fy;
  trace.final_member = best;
  trace.counters = counters;
  trace.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return {members[static_cast<std::size_t>(best)], std::move(trace)};
}

// ------------------------------ cost model ---------------------------------

CostCounters predict_cost(const GuidanceConfig& config, int active_size, int steps,
                          const CoreShape& shape) {
  config.validate();
  std::uint64_t guided = 0;
  for (int i = 0; i < steps; ++i)
    if (config.in_window(static_cast<double>(i) / steps)) ++guided;
  const std::uint64_t unguided = static_cast<std::uint64_t>(steps) - guided;

  const std::uint64_t a = static_cast<std::uint64_t>(active_size);
  const std::uint64_t k = static_cast<std::uint64_t>(config.branch_size);
  const std::uint64_t n = static_cast<std::uint64_t>(config.mc_samples);

  CostCounters cost;
  switch (config.family) {
    case GuidanceFamily::kSampleCurrent:
      cost.model_calls = guided * (a + a * k);
      cost.pred_calls = guided * a * k * n;
      break;
    case GuidanceFamily::kSampleDestination: {
      const std::uint64_t rounds =
          shape.continuous ? static_cast<std::uint64_t>(config.dest_iterations) : 1;
      cost.model_calls = guided * a;
      cost.pred_calls = guided * a * k * rounds;
      break;
    }
    case GuidanceFamily::kGradient:
      if (config.ratio_mode == RatioMode::kTaylor) {
        cost.model_calls = guided * a * k;
        cost.pred_calls = guided * a * k * n;
        cost.backprop_calls = guided * a;
      } else {
        const std::uint64_t neighbors =
            static_cast<std::uint64_t>(shape.dim) * static_cast<std::uint64_t>(shape.n_states) + 1;
        cost.model_calls = guided * a * (k + 1);
        cost.pred_calls = guided * a * n * (k + neighbors);
        cost.backprop_calls = 0;
      }
      break;
  }
  cost.model_calls += unguided * a;
  return cost;
}

std::vector<std::pair<int, int>> budget_factor_pairs(int budget) {
  if (budget < 1 || (budget & (budget - 1)) != 0)
    throw std::invalid_argument("budget must be a positive power of two");
  std::vector<std::pair<int, int>> pairs;
  for (int a = 1; a <= budget; a *= 2) pairs.emplace_back(a, budget / a);
  return pairs;
}

namespace {

template <class Core, class Fns>
std::vector<SweepCell> sweep_impl(const Core& core, const Fns& fns, const GuidanceConfig& config,
                                  int budget, std::span<const std::uint64_t> seeds,
                                  const SearchOptions& options) {
  if (seeds.empty()) throw std::invalid_argument("sweep_fixed_budget: need at least one seed");
  std::vector<SweepCell> cells;
  for (const auto& [a, k] : budget_factor_pairs(budget)) {
    GuidanceConfig cell_config = config;
    cell_config.branch_size = k;
    std::vector<double> fy(seeds.size());
    std::vector<double> wall(seeds.size());
    SearchOptions run_options = options;
    run_options.parallel = false;  // seeds run concurrently instead
    run_options.record_steps = false;
    const int n_seeds = static_cast<int>(seeds.size());
    parallel_for(n_seeds, options, [&](int s) {
      const auto result =
          run_tree_search(core, fns, cell_config, a, seeds[static_cast<std::size_t>(s)], run_options);
      fy[static_cast<std::size_t>(s)] = result.trace.final_fy;
      wall[static_cast<std::size_t>(s)] = result.trace.wall_seconds;
    });
    SweepCell cell;
    cell.budget = budget;
    cell.active_size = a;
    cell.branch_size = k;
    double mean = 0.0;
    for (double v : fy) mean += v;
    mean /= static_cast<double>(fy.size());
    double var = 0.0;
    for (double v : fy) var += (v - mean) * (v - mean);
    cell.mean_objective = mean;
    cell.sd_objective = fy.size() > 1 ? std::sqrt(var / static_cast<double>(fy.size() - 1)) : 0.0;
    double wall_mean = 0.0;
    for (double v : wall) wall_mean += v;
    cell.mean_wall_s = wall_mean / static_cast<double>(wall.size());
    cells.push_back(cell);
  }
  return cells;
}

}  // namespace

std::vector<SweepCell> sweep_fixed_budget(const ContinuousCore& core, const ContinuousTaskFns& fns,
                                          const GuidanceConfig& config, int budget,
                                          std::span<const std::uint64_t> seeds,
                                          const SearchOptions& options) {
  return sweep_impl(core, fns, config, budget, seeds, options);
}

std::vector<SweepCell> sweep_fixed_budget(const DiscreteCore& core, const DiscreteTaskFns& fns,
                                          const GuidanceConfig& config, int budget,
                                          std::span<const std::uint64_t> seeds,
                                          const SearchOptions& options) {
  return sweep_impl(core, fns, config, budget, seeds, options);
}

}  // namespace treeg
