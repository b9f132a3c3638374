#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "treeg/matrix.hpp"
#include "treeg/rng.hpp"

namespace treeg {

// Absorbing mask token of the masked flow; real tokens are 0..S-1.
inline constexpr int kMaskToken = -1;

// A point on the discrete inference path: tokens over [S] plus the mask.
struct DiscreteSequence {
  std::vector<int> tokens;
  double t = 0.0;

  int masked_count() const {
    int n = 0;
    for (int v : tokens) n += (v == kMaskToken);
    return n;
  }
};

// Explicit probability table over [S]^D. Index encoding is little-endian:
// dimension 0 is the least significant digit.
class TabularDistribution {
 public:
  // Desk-scale ceiling on the enumerable support.
  static constexpr std::int64_t kMaxSupport = 1679616;  // 6^8

  TabularDistribution(int dim, int n_states, std::vector<double> probs);

  static TabularDistribution uniform(int dim, int n_states);
  // p(x) proportional to theta^(multiplicity of `token` in x).
  static TabularDistribution count_weighted(int dim, int n_states, int token, double theta);
  // Independent dimensions with the given per-dimension marginals (D x S).
  static TabularDistribution product_marginals(const RowMatrix& marginals);

  int dim() const { return dim_; }
  int n_states() const { return n_states_; }
  std::int64_t support_size() const { return static_cast<std::int64_t>(probs_.size()); }
  const std::vector<double>& probs() const { return probs_; }

  double prob(const std::vector<int>& tokens) const { return probs_[encode(tokens)]; }
  std::size_t encode(const std::vector<int>& tokens) const;
  void decode(std::size_t index, std::vector<int>& tokens) const;

 private:
  int dim_;
  int n_states_;
  std::vector<double> probs_;
};

// Per-dimension categorical predictions of the clean tokens given x_t.
// Row d sums to 1; unmasked dimensions carry the point mass on the
// observed token.
class DiscreteDenoiser {
 public:
  virtual ~DiscreteDenoiser() = default;
  virtual RowMatrix predict(const DiscreteSequence& x) const = 0;
  virtual int dim() const = 0;
  virtual int n_states() const = 0;
};

// Posteriors of all single-position edits of x: for every dimension d and
// every replacement s in [S] u {M}, the denoiser output at x with x^(d) := s.
// `valid(d, s)` is false when the edited sequence is off-support.
struct NeighborPosteriors {
  int dim = 0;
  int n_states = 0;
  RowMatrix base;                     // D x S
  std::vector<RowMatrix> neighbors;   // indexed d * (S + 1) + col, col S = mask
  std::vector<char> neighbor_valid;

  const RowMatrix& at(int d, int col) const {
    return neighbors[static_cast<std::size_t>(d) * static_cast<std::size_t>(n_states + 1) + static_cast<std::size_t>(col)];
  }
  bool valid(int d, int col) const {
    return neighbor_valid[static_cast<std::size_t>(d) * static_cast<std::size_t>(n_states + 1) + static_cast<std::size_t>(col)] != 0;
  }
};

// Exact Bayes posterior under the masked corruption, by enumeration over the
// table. Conditioning reduces to restriction on the unmasked coordinates.
class TabularDenoiser final : public DiscreteDenoiser {
 public:
  explicit TabularDenoiser(TabularDistribution data);

  RowMatrix predict(const DiscreteSequence& x) const override;
  int dim() const override { return data_.dim(); }
  int n_states() const override { return data_.n_states(); }

  // One table sweep producing the base posterior and every single-edit
  // neighbor posterior; used by the exact-ratio oracle and the gradient
  // estimator's lazy Jacobian.
  NeighborPosteriors neighbor_posteriors(const DiscreteSequence& x) const;

  const TabularDistribution& data() const { return data_; }

 private:
  TabularDistribution data_;
};

// Off-state transition rates, one dense length-S row per masked dimension.
// Unmasked dimensions never move in a masked flow, so their rows stay empty.
struct RateSpec {
  int dim = 0;
  int n_states = 0;
  std::vector<std::vector<double>> rows;  // rows[d] empty <=> structurally zero

  void validate() const;  // throws std::invalid_argument on negative/non-finite rates
};

// Per-dimension masking: keep x1^(d) with probability t, else mask.
DiscreteSequence corrupt_discrete(const std::vector<int>& x1, double t, RngStream& rng);

// Mask-flow conditional rate: 1/(1-t) iff x_t is the mask and j = x1, else 0.
// Throws std::invalid_argument at t = 1.
double conditional_rate(int x_t_token, int j, int x1_token, double t);

// Denoiser-expected rates: u^(d)(j | x_t) / (1 - t) on masked dimensions.
RateSpec model_rate(const DiscreteSequence& x, const DiscreteDenoiser& denoiser, double t);
RateSpec model_rate_from_prediction(const DiscreteSequence& x, const RowMatrix& prediction, double t);

// Per-dimension jump distribution of one Euler step: probability rate*dt to
// each target, residual mass on staying. When the total jump mass exceeds 1
// (the clamped final step), masses are rescaled and the stay mass is 0.
// Returns S + 1 entries; the last one is the stay probability.
std::vector<double> euler_jump_probs(const std::vector<double>& rates, double dt);

// One Euler step of the CTMC. Throws on negative rates.
DiscreteSequence euler_step(const DiscreteSequence& x, const RateSpec& rates, double dt,
                            RngStream& rng);

// Exact per-dimension clean-token posteriors given x_t (Bayes by enumeration).
// Throws std::domain_error("off-support observation") when no table entry is
// consistent with the unmasked coordinates.
RowMatrix tabular_posterior(const DiscreteSequence& x, const TabularDistribution& data);

}  // namespace treeg
