// Flat double-precision tensor: a shape, contiguous values and an optional
// same-shape gradient buffer. This is all the network needs; there is no
// general broadcasting or graph machinery.
#pragma once

#include <Eigen/Core>
#include <numeric>
#include <string>
#include <vector>

#include "pdgait/errors.hpp"

namespace pdgait::nn {

struct Tensor {
  std::vector<Eigen::Index> shape;
  Eigen::VectorXd data;
  Eigen::VectorXd grad;  // size 0 until alloc_grad()

  Tensor() = default;
  explicit Tensor(std::vector<Eigen::Index> dims) : shape(std::move(dims)) {
    data = Eigen::VectorXd::Zero(element_count(shape));
  }

  static Eigen::Index element_count(const std::vector<Eigen::Index>& dims) {
    Eigen::Index n = 1;
    for (Eigen::Index d : dims) n *= d;
    return n;
  }

  Eigen::Index size() const { return data.size(); }

  void alloc_grad() {
    if (grad.size() != data.size()) grad = Eigen::VectorXd::Zero(data.size());
  }
  void zero_grad() {
    if (grad.size() > 0) grad.setZero();
  }
  bool all_finite() const { return data.allFinite(); }
};

// Matrix views over a tensor's flat storage (column-major).
inline Eigen::Map<Eigen::MatrixXd> as_matrix(Eigen::VectorXd& v, Eigen::Index rows,
                                             Eigen::Index cols) {
  if (v.size() != rows * cols) throw ShapeMismatch("matrix view size mismatch");
  return {v.data(), rows, cols};
}
inline Eigen::Map<const Eigen::MatrixXd> as_matrix(const Eigen::VectorXd& v, Eigen::Index rows,
                                                   Eigen::Index cols) {
  if (v.size() != rows * cols) throw ShapeMismatch("matrix view size mismatch");
  return {v.data(), rows, cols};
}

}  // namespace pdgait::nn
