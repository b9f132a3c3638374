#include "treeg/objective.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace treeg {

std::shared_ptr<ContinuousObjective> gaussian_regression_objective(
    std::function<double(std::span<const double>)> f, double y, double sigma) {
  if (!(sigma > 0.0)) throw std::invalid_argument("gaussian_regression_objective: sigma must be > 0");
  const double inv_two_sigma_sq = 1.0 / (2.0 * sigma * sigma);
  return std::make_shared<ContinuousRuleObjective>(
      std::move(f),
      [inv_two_sigma_sq](double target, double value) {
        const double d = target - value;
        return d * d * inv_two_sigma_sq;
      },
      y);
}

std::shared_ptr<ContinuousRuleObjective> count_above_threshold_rule(double epsilon, double target) {
  return std::make_shared<ContinuousRuleObjective>(
      [epsilon](std::span<const double> x) {
        int count = 0;
        for (double v : x) count += (v > epsilon);
        return static_cast<double>(count);
      },
      [](double t, double v) {
        const double d = t - v;
        return d * d;
      },
      target);
}

std::shared_ptr<DiscreteRuleObjective> token_count_rule(int token, double target, double sigma) {
  if (!(sigma > 0.0)) throw std::invalid_argument("token_count_rule: sigma must be > 0");
  const double inv_two_sigma_sq = 1.0 / (2.0 * sigma * sigma);
  return std::make_shared<DiscreteRuleObjective>(
      [token](const std::vector<int>& tokens) {
        int count = 0;
        for (int v : tokens) count += (v == token);
        return static_cast<double>(count);
      },
      [inv_two_sigma_sq](double t, double v) {
        const double d = t - v;
        return d * d * inv_two_sigma_sq;
      },
      target);
}

double LinearOnehotPredictor::evaluate(const RowMatrix& p) const {
  double acc = 0.0;
  for (std::size_t i = 0; i < w_.data.size(); ++i) acc += w_.data[i] * p.data[i];
  return acc;
}

RowMatrix LinearOnehotPredictor::gradient(const RowMatrix&) const { return w_; }

std::shared_ptr<LinearOnehotPredictor> linear_onehot_predictor(RowMatrix weights) {
  for (double v : weights.data)
    if (!std::isfinite(v)) throw std::invalid_argument("linear_onehot_predictor: non-finite weight");
  return std::make_shared<LinearOnehotPredictor>(std::move(weights));
}

RegressionOnehotPredictor::RegressionOnehotPredictor(RowMatrix weights, double target, double sigma)
    : w_(std::move(weights)), target_(target) {
  if (!(sigma > 0.0)) throw std::invalid_argument("RegressionOnehotPredictor: sigma must be > 0");
  inv_two_sigma_sq_ = 1.0 / (2.0 * sigma * sigma);
  inv_sigma_sq_ = 1.0 / (sigma * sigma);
}

double RegressionOnehotPredictor::evaluate(const RowMatrix& p) const {
  double s = 0.0;
  for (std::size_t i = 0; i < w_.data.size(); ++i) s += w_.data[i] * p.data[i];
  const double d = target_ - s;
  return -d * d * inv_two_sigma_sq_;
}

RowMatrix RegressionOnehotPredictor::gradient(const RowMatrix& p) const {
  double s = 0.0;
  for (std::size_t i = 0; i < w_.data.size(); ++i) s += w_.data[i] * p.data[i];
  RowMatrix g = w_;
  const double scale = (target_ - s) * inv_sigma_sq_;
  for (double& v : g.data) v *= scale;
  return g;
}

SoftmaxClassifier::SoftmaxClassifier(std::vector<RowMatrix> class_weights, int target_class)
    : w_(std::move(class_weights)), target_(target_class) {
  if (w_.empty()) throw std::invalid_argument("SoftmaxClassifier: no classes");
  if (target_ < 0 || target_ >= n_classes())
    throw std::invalid_argument("SoftmaxClassifier: target class out of range");
}

std::vector<double> SoftmaxClassifier::scores(const RowMatrix& p) const {
  std::vector<double> s(w_.size(), 0.0);
  for (std::size_t c = 0; c < w_.size(); ++c)
    for (std::size_t i = 0; i < p.data.size(); ++i) s[c] += w_[c].data[i] * p.data[i];
  return s;
}

double SoftmaxClassifier::evaluate(const std::vector<int>& tokens) const {
  return evaluate(one_hot_rows(tokens, w_.front().cols));
}

double SoftmaxClassifier::evaluate(const RowMatrix& p) const {
  const auto s = scores(p);
  const double m = *std::max_element(s.begin(), s.end());
  double z = 0.0;
  for (double v : s) z += std::exp(v - m);
  return s[static_cast<std::size_t>(target_)] - m - std::log(z);
}

RowMatrix SoftmaxClassifier::gradient(const RowMatrix& p) const {
  const auto s = scores(p);
  const double m = *std::max_element(s.begin(), s.end());
  double z = 0.0;
  std::vector<double> soft(s.size());
  for (std::size_t c = 0; c < s.size(); ++c) {
    soft[c] = std::exp(s[c] - m);
    z += soft[c];
  }
  for (double& v : soft) v /= z;
  RowMatrix g = w_[static_cast<std::size_t>(target_)];
  for (std::size_t c = 0; c < w_.size(); ++c)
    for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] -= soft[c] * w_[c].data[i];
  return g;
}

GaussianTargetPredictor::GaussianTargetPredictor(std::vector<double> target, double sigma)
    : target_(std::move(target)) {
  if (!(sigma > 0.0)) throw std::invalid_argument("GaussianTargetPredictor: sigma must be > 0");
  inv_sigma_sq_ = 1.0 / (sigma * sigma);
}

double GaussianTargetPredictor::evaluate(std::span<const double> x) const {
  double acc = 0.0;
  for (std::size_t i = 0; i < target_.size(); ++i) {
    const double d = x[i] - target_[i];
    acc += d * d;
  }
  return -0.5 * acc * inv_sigma_sq_;
}

std::vector<double> GaussianTargetPredictor::gradient(std::span<const double> x) const {
  std::vector<double> g(target_.size());
  for (std::size_t i = 0; i < target_.size(); ++i) g[i] = -(x[i] - target_[i]) * inv_sigma_sq_;
  return g;
}

std::vector<double> central_difference_gradient(
    const std::function<double(std::span<const double>)>& fn, std::span<const double> x,
    double step) {
  std::vector<double> point(x.begin(), x.end());
  std::vector<double> g(point.size());
  for (std::size_t i = 0; i < point.size(); ++i) {
    const double saved = point[i];
    point[i] = saved + step;
    const double hi = fn(point);
    point[i] = saved - step;
    const double lo = fn(point);
    point[i] = saved;
    g[i] = (hi - lo) / (2.0 * step);
  }
  return g;
}

RowMatrix central_difference_gradient(const OnehotPredictor& predictor, const RowMatrix& p,
                                      double step) {
  RowMatrix point = p;
  RowMatrix g(p.rows, p.cols);
  for (std::size_t i = 0; i < point.data.size(); ++i) {
    const double saved = point.data[i];
    point.data[i] = saved + step;
    const double hi = predictor.evaluate(point);
    point.data[i] = saved - step;
    const double lo = predictor.evaluate(point);
    point.data[i] = saved;
    g.data[i] = (hi - lo) / (2.0 * step);
  }
  return g;
}

}  // namespace treeg
