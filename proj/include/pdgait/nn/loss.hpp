// Cross-entropy losses for the two heads, mean-reduced over the batch.
// Probabilities are clamped to [1e-12, 1 - 1e-12] before any log.
#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <vector>

#include "pdgait/errors.hpp"

namespace pdgait::nn {

inline constexpr double kProbClamp = 1e-12;

inline double clamp_prob(double p) {
  return std::clamp(p, kProbClamp, 1.0 - kProbClamp);
}

struct LossResult {
  double value = 0.0;
  Eigen::MatrixXd grad;  // d(mean loss) / d(prediction), same shape as prediction
};

// Binary cross-entropy against targets in {0, 1}; predictions are the
// sigmoid outputs, one column.
inline LossResult bce_loss(const Eigen::MatrixXd& p, const Eigen::VectorXd& target) {
  if (p.cols() != 1 || p.rows() != target.size()) throw ShapeMismatch("bce shapes");
  const double n = static_cast<double>(p.rows());
  LossResult res;
  res.grad.resize(p.rows(), 1);
  double total = 0.0;
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    const double pi = clamp_prob(p(i, 0));
    const double t = target(i);
    total += -(t * std::log(pi) + (1.0 - t) * std::log(1.0 - pi));
    res.grad(i, 0) = (-t / pi + (1.0 - t) / (1.0 - pi)) / n;
  }
  res.value = total / n;
  return res;
}

// Categorical cross-entropy; predictions are softmax rows, targets are class
// indices 0..K-1.
inline LossResult cce_loss(const Eigen::MatrixXd& p, const std::vector<int>& target) {
  if (p.rows() != static_cast<Eigen::Index>(target.size())) throw ShapeMismatch("cce shapes");
  const double n = static_cast<double>(p.rows());
  LossResult res;
  res.grad = Eigen::MatrixXd::Zero(p.rows(), p.cols());
  double total = 0.0;
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    const int t = target[static_cast<std::size_t>(i)];
    if (t < 0 || t >= p.cols()) throw ShapeMismatch("cce target index out of range");
    const double pi = clamp_prob(p(i, t));
    total += -std::log(pi);
    res.grad(i, t) = -1.0 / pi / n;
  }
  res.value = total / n;
  return res;
}

}  // namespace pdgait::nn
