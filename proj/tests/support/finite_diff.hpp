// Central-difference gradient checking. The caller supplies a scalar loss
// closure that re-runs the forward pass from scratch; this perturbs one value
// at a time and compares against the analytic gradient.
#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

namespace testsupport {

inline constexpr double kFdStep = 1e-5;
inline constexpr double kFdRelTol = 1e-4;
inline constexpr double kFdAbsTol = 1e-8;

template <typename F>
Eigen::VectorXd numeric_gradient(Eigen::VectorXd& x, F&& loss, double h = kFdStep) {
  Eigen::VectorXd g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double orig = x(i);
    x(i) = orig + h;
    const double fp = loss();
    x(i) = orig - h;
    const double fm = loss();
    x(i) = orig;
    g(i) = (fp - fm) / (2.0 * h);
  }
  return g;
}

// Worst relative error between analytic and numeric gradients; tiny entries
// compare absolutely.
inline double worst_gradient_error(const Eigen::VectorXd& analytic,
                                   const Eigen::VectorXd& numeric) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < analytic.size(); ++i) {
    const double a = analytic(i), n = numeric(i);
    const double diff = std::abs(a - n);
    const double scale = std::max(std::abs(a), std::abs(n));
    if (scale < 1e-6) {
      if (diff > kFdAbsTol) worst = std::max(worst, 1.0);  // flat region mismatch
      continue;
    }
    worst = std::max(worst, diff / scale);
  }
  return worst;
}

template <typename F>
bool gradient_matches(Eigen::VectorXd& x, const Eigen::VectorXd& analytic, F&& loss,
                      double tol = kFdRelTol) {
  const Eigen::VectorXd numeric = numeric_gradient(x, loss);
  return worst_gradient_error(analytic, numeric) < tol;
}

}  // namespace testsupport
