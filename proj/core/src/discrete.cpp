#include "treeg/discrete.hpp"

#include <cmath>
#include <stdexcept>

namespace treeg {

namespace {

std::int64_t pow_i64(int base, int exp) {
  std::int64_t v = 1;
  for (int i = 0; i < exp; ++i) v *= base;
  return v;
}

void check_token_range(int token, int n_states, bool allow_mask) {
  if (token == kMaskToken) {
    if (!allow_mask) throw std::invalid_argument("mask token not allowed here");
    return;
  }
  if (token < 0 || token >= n_states) throw std::invalid_argument("token out of range");
}

}  // namespace

TabularDistribution::TabularDistribution(int dim, int n_states, std::vector<double> probs)
    : dim_(dim), n_states_(n_states), probs_(std::move(probs)) {
  if (dim_ < 1 || n_states_ < 2)
    throw std::invalid_argument("TabularDistribution: need dim >= 1 and n_states >= 2");
  const std::int64_t size = pow_i64(n_states_, dim_);
  if (size > kMaxSupport)
    throw std::invalid_argument("TabularDistribution: support exceeds the desk-scale ceiling");
  if (static_cast<std::int64_t>(probs_.size()) != size)
    throw std::invalid_argument("TabularDistribution: table size must equal S^D");
  double sum = 0.0;
  bool any = false;
  for (double p : probs_) {
    if (!(p >= 0.0)) throw std::invalid_argument("TabularDistribution: negative entry");
    sum += p;
    any = any || p > 0.0;
  }
  if (!any) throw std::invalid_argument("TabularDistribution: empty support");
  if (std::abs(sum - 1.0) > 1e-12)
    throw std::invalid_argument("TabularDistribution: entries must sum to 1 within 1e-12");
}

TabularDistribution TabularDistribution::uniform(int dim, int n_states) {
  const std::int64_t size = pow_i64(n_states, dim);
  std::vector<double> p(static_cast<std::size_t>(size), 1.0 / static_cast<double>(size));
  return TabularDistribution(dim, n_states, std::move(p));
}

TabularDistribution TabularDistribution::count_weighted(int dim, int n_states, int token,
                                                        double theta) {
  if (theta <= 0.0) throw std::invalid_argument("count_weighted: theta must be > 0");
  check_token_range(token, n_states, false);
  const std::int64_t size = pow_i64(n_states, dim);
  std::vector<double> p(static_cast<std::size_t>(size));
  std::vector<int> tokens(static_cast<std::size_t>(dim));
  double sum = 0.0;
  for (std::int64_t idx = 0; idx < size; ++idx) {
    std::int64_t rem = idx;
    int count = 0;
    for (int d = 0; d < dim; ++d) {
      count += (static_cast<int>(rem % n_states) == token);
      rem /= n_states;
    }
    const double w = std::pow(theta, count);
    p[static_cast<std::size_t>(idx)] = w;
    sum += w;
  }
  for (double& v : p) v /= sum;
  return TabularDistribution(dim, n_states, std::move(p));
}

TabularDistribution TabularDistribution::product_marginals(const RowMatrix& marginals) {
  const int dim = marginals.rows;
  const int n_states = marginals.cols;
  const std::int64_t size = pow_i64(n_states, dim);
  std::vector<double> p(static_cast<std::size_t>(size));
  for (std::int64_t idx = 0; idx < size; ++idx) {
    std::int64_t rem = idx;
    double v = 1.0;
    for (int d = 0; d < dim; ++d) {
      v *= marginals(d, static_cast<int>(rem % n_states));
      rem /= n_states;
    }
    p[static_cast<std::size_t>(idx)] = v;
  }
  double sum = 0.0;
  for (double v : p) sum += v;
  for (double& v : p) v /= sum;
  return TabularDistribution(dim, n_states, std::move(p));
}

std::size_t TabularDistribution::encode(const std::vector<int>& tokens) const {
  std::size_t idx = 0;
  std::size_t stride = 1;
  for (int d = 0; d < dim_; ++d) {
    check_token_range(tokens[static_cast<std::size_t>(d)], n_states_, false);
    idx += stride * static_cast<std::size_t>(tokens[static_cast<std::size_t>(d)]);
    stride *= static_cast<std::size_t>(n_states_);
  }
  return idx;
}

void TabularDistribution::decode(std::size_t index, std::vector<int>& tokens) const {
  tokens.resize(static_cast<std::size_t>(dim_));
  for (int d = 0; d < dim_; ++d) {
    tokens[static_cast<std::size_t>(d)] = static_cast<int>(index % static_cast<std::size_t>(n_states_));
    index /= static_cast<std::size_t>(n_states_);
  }
}

TabularDenoiser::TabularDenoiser(TabularDistribution data) : data_(std::move(data)) {}

RowMatrix TabularDenoiser::predict(const DiscreteSequence& x) const {
  return tabular_posterior(x, data_);
}

RowMatrix tabular_posterior(const DiscreteSequence& x, const TabularDistribution& data) {
  const int dim = data.dim();
  const int n_states = data.n_states();
  if (static_cast<int>(x.tokens.size()) != dim)
    throw std::invalid_argument("tabular_posterior: dimension mismatch");
  for (int v : x.tokens) check_token_range(v, n_states, true);

  // Enumerate only the slice consistent with the observed coordinates: an
  // odometer over the masked dimensions with incremental index arithmetic.
  std::vector<int> masked_dims;
  std::vector<std::size_t> masked_strides;
  std::size_t base_index = 0;
  std::size_t stride = 1;
  for (int d = 0; d < dim; ++d) {
    const int obs = x.tokens[static_cast<std::size_t>(d)];
    if (obs == kMaskToken) {
      masked_dims.push_back(d);
      masked_strides.push_back(stride);
    } else {
      base_index += stride * static_cast<std::size_t>(obs);
    }
    stride *= static_cast<std::size_t>(n_states);
  }

  const int m = static_cast<int>(masked_dims.size());
  const auto& probs = data.probs();
  RowMatrix acc(dim, n_states, 0.0);
  double total = 0.0;
  std::vector<int> digits(static_cast<std::size_t>(m), 0);
  std::size_t index = base_index;
  while (true) {
    const double p = probs[index];
    if (p != 0.0) {
      total += p;
      for (int i = 0; i < m; ++i)
        acc(masked_dims[static_cast<std::size_t>(i)], digits[static_cast<std::size_t>(i)]) += p;
    }
    int i = 0;
    for (; i < m; ++i) {
      if (++digits[static_cast<std::size_t>(i)] < n_states) {
        index += masked_strides[static_cast<std::size_t>(i)];
        break;
      }
      digits[static_cast<std::size_t>(i)] = 0;
      index -= masked_strides[static_cast<std::size_t>(i)] * static_cast<std::size_t>(n_states - 1);
    }
    if (i == m) break;
  }
  if (total <= 0.0) throw std::domain_error("off-support observation");

  RowMatrix out(dim, n_states, 0.0);
  for (int d = 0; d < dim; ++d) {
    const int obs = x.tokens[static_cast<std::size_t>(d)];
    if (obs != kMaskToken) {
      out(d, obs) = 1.0;
    } else {
      for (int s = 0; s < n_states; ++s) out(d, s) = acc(d, s) / total;
    }
  }
  return out;
}

NeighborPosteriors TabularDenoiser::neighbor_posteriors(const DiscreteSequence& x) const {
  const int dim = data_.dim();
  const int n_states = data_.n_states();
  const int cols = n_states + 1;  // last column = mask
  if (static_cast<int>(x.tokens.size()) != dim)
    throw std::invalid_argument("neighbor_posteriors: dimension mismatch");
  for (int v : x.tokens) check_token_range(v, n_states, true);

  // Accumulators: token-count rows and total weight for the base pattern and
  // for every single-position edit (d, col). A table entry consistent with a
  // pattern contributes its weight to that pattern's per-dimension counts.
  const std::size_t n_nb = static_cast<std::size_t>(dim) * static_cast<std::size_t>(cols);
  std::vector<RowMatrix> acc(n_nb, RowMatrix(dim, n_states, 0.0));
  std::vector<double> tot(n_nb, 0.0);
  RowMatrix acc_base(dim, n_states, 0.0);
  double tot_base = 0.0;

  const auto& probs = data_.probs();
  std::vector<int> y(static_cast<std::size_t>(dim));
  const std::int64_t size = static_cast<std::int64_t>(probs.size());
  for (std::int64_t idx = 0; idx < size; ++idx) {
    const double p = probs[static_cast<std::size_t>(idx)];
    if (p == 0.0) continue;
    std::int64_t rem = idx;
    int mismatch_dim = -1;
    int mismatches = 0;
    for (int d = 0; d < dim; ++d) {
      const int tok = static_cast<int>(rem % n_states);
      rem /= n_states;
      y[static_cast<std::size_t>(d)] = tok;
      const int obs = x.tokens[static_cast<std::size_t>(d)];
      if (obs != kMaskToken && obs != tok) {
        if (++mismatches > 1) break;
        mismatch_dim = d;
      }
    }
    if (mismatches > 1) continue;

    const auto add_to = [&](std::size_t slot) {
      tot[slot] += p;
      auto& m = acc[slot];
      for (int e = 0; e < dim; ++e) m(e, y[static_cast<std::size_t>(e)]) += p;
    };

    if (mismatches == 1) {
      // Consistent only with edits of the conflicting dimension: re-observe it
      // as this entry's token, or unobserve it.
      const std::size_t row = static_cast<std::size_t>(mismatch_dim) * static_cast<std::size_t>(cols);
      add_to(row + static_cast<std::size_t>(y[static_cast<std::size_t>(mismatch_dim)]));
      add_to(row + static_cast<std::size_t>(n_states));
      continue;
    }

    tot_base += p;
    for (int e = 0; e < dim; ++e) acc_base(e, y[static_cast<std::size_t>(e)]) += p;
    for (int d = 0; d < dim; ++d) {
      const std::size_t row = static_cast<std::size_t>(d) * static_cast<std::size_t>(cols);
      add_to(row + static_cast<std::size_t>(y[static_cast<std::size_t>(d)]));
      add_to(row + static_cast<std::size_t>(n_states));
    }
  }
  if (tot_base <= 0.0) throw std::domain_error("off-support observation");

  NeighborPosteriors out;
  out.dim = dim;
  out.n_states = n_states;
  out.neighbors.assign(n_nb, RowMatrix());
  out.neighbor_valid.assign(n_nb, 0);

  const auto normalize = [&](const RowMatrix& a, double total, const std::vector<int>& pattern) {
    RowMatrix m(dim, n_states, 0.0);
    for (int e = 0; e < dim; ++e) {
      const int obs = pattern[static_cast<std::size_t>(e)];
      if (obs != kMaskToken) {
        m(e, obs) = 1.0;
      } else {
        for (int s = 0; s < n_states; ++s) m(e, s) = a(e, s) / total;
      }
    }
    return m;
  };

  out.base = normalize(acc_base, tot_base, x.tokens);
  std::vector<int> pattern = x.tokens;
  for (int d = 0; d < dim; ++d) {
    const int saved = pattern[static_cast<std::size_t>(d)];
    for (int col = 0; col < cols; ++col) {
      const std::size_t slot = static_cast<std::size_t>(d) * static_cast<std::size_t>(cols) + static_cast<std::size_t>(col);
      if (tot[slot] <= 0.0) continue;  // off-support edit
      pattern[static_cast<std::size_t>(d)] = (col == n_states) ? kMaskToken : col;
      out.neighbors[slot] = normalize(acc[slot], tot[slot], pattern);
      out.neighbor_valid[slot] = 1;
    }
    pattern[static_cast<std::size_t>(d)] = saved;
  }
  return out;
}

void RateSpec::validate() const {
  if (static_cast<int>(rows.size()) != dim)
    throw std::invalid_argument("RateSpec: row count mismatch");
  for (const auto& row : rows) {
    if (row.empty()) continue;
    if (static_cast<int>(row.size()) != n_states)
      throw std::invalid_argument("RateSpec: row length mismatch");
    for (double r : row)
      if (!(r >= 0.0) || !std::isfinite(r))
        throw std::invalid_argument("RateSpec: rates must be finite and nonnegative");
  }
}

DiscreteSequence corrupt_discrete(const std::vector<int>& x1, double t, RngStream& rng) {
  if (t < 0.0 || t > 1.0) throw std::invalid_argument("corrupt_discrete: t must be in [0, 1]");
  DiscreteSequence out;
  out.t = t;
  out.tokens.resize(x1.size());
  for (std::size_t d = 0; d < x1.size(); ++d)
    out.tokens[d] = (rng.uniform() < t) ? x1[d] : kMaskToken;
  return out;
}

double conditional_rate(int x_t_token, int j, int x1_token, double t) {
  if (t >= 1.0) throw std::invalid_argument("conditional_rate: singular at t = 1");
  if (x_t_token != kMaskToken) return 0.0;
  return (j == x1_token) ? 1.0 / (1.0 - t) : 0.0;
}

RateSpec model_rate_from_prediction(const DiscreteSequence& x, const RowMatrix& prediction,
                                    double t) {
  if (t >= 1.0) throw std::invalid_argument("model_rate: singular at t = 1");
  RateSpec out;
  out.dim = static_cast<int>(x.tokens.size());
  out.n_states = prediction.cols;
  out.rows.resize(static_cast<std::size_t>(out.dim));
  const double inv = 1.0 / (1.0 - t);
  for (int d = 0; d < out.dim; ++d) {
    if (x.tokens[static_cast<std::size_t>(d)] != kMaskToken) continue;
    auto& row = out.rows[static_cast<std::size_t>(d)];
    row.resize(static_cast<std::size_t>(out.n_states));
    for (int s = 0; s < out.n_states; ++s) row[static_cast<std::size_t>(s)] = prediction(d, s) * inv;
  }
  return out;
}

RateSpec model_rate(const DiscreteSequence& x, const DiscreteDenoiser& denoiser, double t) {
  if (t >= 1.0) throw std::invalid_argument("model_rate: singular at t = 1");
  return model_rate_from_prediction(x, denoiser.predict(x), t);
}

std::vector<double> euler_jump_probs(const std::vector<double>& rates, double dt) {
  std::vector<double> probs(rates.size() + 1, 0.0);
  double sum = 0.0;
  for (std::size_t s = 0; s < rates.size(); ++s) {
    if (!(rates[s] >= 0.0)) throw std::invalid_argument("euler_step: negative rate");
    probs[s] = rates[s] * dt;
    sum += probs[s];
  }
  if (sum > 1.0) {
    // Clamped (final-step) case: jump mass capped at 1, stay mass 0.
    for (std::size_t s = 0; s < rates.size(); ++s) probs[s] /= sum;
    probs.back() = 0.0;
  } else {
    probs.back() = 1.0 - sum;
  }
  return probs;
}

DiscreteSequence euler_step(const DiscreteSequence& x, const RateSpec& rates, double dt,
                            RngStream& rng) {
  rates.validate();
  DiscreteSequence out;
  out.t = x.t + dt;
  out.tokens = x.tokens;
  for (int d = 0; d < rates.dim; ++d) {
    const auto& row = rates.rows[static_cast<std::size_t>(d)];
    if (row.empty()) continue;
    const auto probs = euler_jump_probs(row, dt);
    const int pick = rng.categorical(probs);
    if (pick < rates.n_states) out.tokens[static_cast<std::size_t>(d)] = pick;
    // else: stay (keeps the current token, normally the mask)
  }
  return out;
}

}  // namespace treeg
