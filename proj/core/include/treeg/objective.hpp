#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "treeg/matrix.hpp"

namespace treeg {

// Scalar score f_y on clean continuous samples; higher is better.
class ContinuousObjective {
 public:
  virtual ~ContinuousObjective() = default;
  virtual double evaluate(std::span<const double> x) const = 0;
};

// f_y plus an exact gradient, for gradient-based guidance.
class ContinuousPredictor : public ContinuousObjective {
 public:
  virtual std::vector<double> gradient(std::span<const double> x) const = 0;
};

// Scalar score f_y on clean token sequences.
class DiscreteObjective {
 public:
  virtual ~DiscreteObjective() = default;
  virtual double evaluate(const std::vector<int>& tokens) const = 0;
};

// Differentiable objective over row-stochastic D x S relaxations; hard
// sequences enter as one-hot rows.
class OnehotPredictor {
 public:
  virtual ~OnehotPredictor() = default;
  virtual double evaluate(const RowMatrix& p) const = 0;
  virtual RowMatrix gradient(const RowMatrix& p) const = 0;

  double evaluate_tokens(const std::vector<int>& tokens, int n_states) const {
    return evaluate(one_hot_rows(tokens, n_states));
  }
};

// f_y(x) = -loss(target, rule(x)) with loss(y, y) = 0.
class ContinuousRuleObjective final : public ContinuousObjective {
 public:
  using Rule = std::function<double(std::span<const double>)>;
  using Loss = std::function<double(double, double)>;

  ContinuousRuleObjective(Rule rule, Loss loss, double target)
      : rule_(std::move(rule)), loss_(std::move(loss)), target_(target) {}

  double evaluate(std::span<const double> x) const override {
    return -loss_(target_, rule_(x));
  }
  double rule_value(std::span<const double> x) const { return rule_(x); }
  double target() const { return target_; }

 private:
  Rule rule_;
  Loss loss_;
  double target_;
};

class DiscreteRuleObjective final : public DiscreteObjective {
 public:
  using Rule = std::function<double(const std::vector<int>&)>;
  using Loss = std::function<double(double, double)>;

  DiscreteRuleObjective(Rule rule, Loss loss, double target)
      : rule_(std::move(rule)), loss_(std::move(loss)), target_(target) {}

  double evaluate(const std::vector<int>& tokens) const override {
    return -loss_(target_, rule_(tokens));
  }
  double rule_value(const std::vector<int>& tokens) const { return rule_(tokens); }
  double target() const { return target_; }

 private:
  Rule rule_;
  Loss loss_;
  double target_;
};

// Regression scoring: f_y(x) = -(y - f(x))^2 / (2 sigma^2).
// Throws std::invalid_argument for sigma <= 0.
std::shared_ptr<ContinuousObjective> gaussian_regression_objective(
    std::function<double(std::span<const double>)> f, double y, double sigma);

// Number of coordinates strictly above epsilon, scored with squared loss.
std::shared_ptr<ContinuousRuleObjective> count_above_threshold_rule(double epsilon, double target);

// Multiplicity of `token`, scored through the regression form with width sigma.
std::shared_ptr<DiscreteRuleObjective> token_count_rule(int token, double target,
                                                        double sigma = 1.0);

// evaluate(P) = sum_{d,s} weights[d,s] * P[d,s]; the gradient is the constant
// weight table, so first-order expansions of this predictor are exact.
class LinearOnehotPredictor final : public OnehotPredictor {
 public:
  explicit LinearOnehotPredictor(RowMatrix weights) : w_(std::move(weights)) {}
  double evaluate(const RowMatrix& p) const override;
  RowMatrix gradient(const RowMatrix& p) const override;
  const RowMatrix& weights() const { return w_; }

 private:
  RowMatrix w_;
};

std::shared_ptr<LinearOnehotPredictor> linear_onehot_predictor(RowMatrix weights);

// Regression scoring of a linear feature: f(P) = -(y - <W, P>)^2 / (2 sigma^2).
// Quadratic in P, so first-order ratio expansions are no longer exact.
class RegressionOnehotPredictor final : public OnehotPredictor {
 public:
  RegressionOnehotPredictor(RowMatrix weights, double target, double sigma);
  double evaluate(const RowMatrix& p) const override;
  RowMatrix gradient(const RowMatrix& p) const override;

 private:
  RowMatrix w_;
  double target_;
  double inv_two_sigma_sq_;
  double inv_sigma_sq_;
};

// Exact log-linear classifier over token sequences: per-class score
// score_c(P) = sum_{d,s} w_c[d,s] P[d,s], f_y = log softmax(score)_y.
// Serves as both the discrete objective (on hard sequences) and the
// differentiable predictor (on relaxations).
class SoftmaxClassifier final : public DiscreteObjective, public OnehotPredictor {
 public:
  SoftmaxClassifier(std::vector<RowMatrix> class_weights, int target_class);

  double evaluate(const std::vector<int>& tokens) const override;
  double evaluate(const RowMatrix& p) const override;
  RowMatrix gradient(const RowMatrix& p) const override;

  int n_classes() const { return static_cast<int>(w_.size()); }
  int target_class() const { return target_; }

 private:
  std::vector<double> scores(const RowMatrix& p) const;
  std::vector<RowMatrix> w_;
  int target_;
};

// Smooth continuous predictor f(x) = -|x - target|^2 / (2 sigma^2).
class GaussianTargetPredictor final : public ContinuousPredictor {
 public:
  GaussianTargetPredictor(std::vector<double> target, double sigma);
  double evaluate(std::span<const double> x) const override;
  std::vector<double> gradient(std::span<const double> x) const override;

 private:
  std::vector<double> target_;
  double inv_sigma_sq_;
};

// Central finite differences of a scalar function; used by the gradient
// self-checks.
std::vector<double> central_difference_gradient(
    const std::function<double(std::span<const double>)>& fn, std::span<const double> x,
    double step);

RowMatrix central_difference_gradient(const OnehotPredictor& predictor, const RowMatrix& p,
                                      double step);

}  // namespace treeg
