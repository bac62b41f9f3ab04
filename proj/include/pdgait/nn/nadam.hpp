// Nesterov Adam (Nadam) with the momentum warmup schedule
// mu_t = beta1 * (1 - 0.5 * 0.96^(t * schedule_decay)). The update applies
// the next step's momentum to the bias-corrected first moment and the current
// step's complement to the bias-corrected raw gradient.
#pragma once

#include <Eigen/Core>
#include <cmath>
#include <vector>

#include "pdgait/errors.hpp"
#include "pdgait/nn/tensor.hpp"

namespace pdgait::nn {

struct NadamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double schedule_decay = 0.004;
};

class Nadam {
 public:
  explicit Nadam(NadamConfig cfg = {}) : cfg_(cfg) {}

  // Registers the parameters this optimizer owns and allocates moments.
  void attach(std::vector<Tensor*> params) {
    params_ = std::move(params);
    m_.clear();
    v_.clear();
    for (Tensor* p : params_) {
      m_.push_back(Eigen::VectorXd::Zero(p->size()));
      v_.push_back(Eigen::VectorXd::Zero(p->size()));
    }
    t_ = 0;
    mu_product_ = 1.0;
  }

  void reset() {
    for (auto& m : m_) m.setZero();
    for (auto& v : v_) v.setZero();
    t_ = 0;
    mu_product_ = 1.0;
  }

  double learning_rate() const { return cfg_.learning_rate; }
  void set_learning_rate(double lr) { cfg_.learning_rate = lr; }
  long step_count() const { return t_; }
  const NadamConfig& config() const { return cfg_; }

  double mu_at(long t) const {
    return cfg_.beta1 *
           (1.0 - 0.5 * std::pow(0.96, static_cast<double>(t) * cfg_.schedule_decay));
  }

  void step() {
    ++t_;
    const double mu_t = mu_at(t_);
    const double mu_next = mu_at(t_ + 1);
    const double mu_prod_t = mu_product_ * mu_t;
    const double mu_prod_next = mu_prod_t * mu_next;
    const double v_corr = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));

    for (std::size_t i = 0; i < params_.size(); ++i) {
      Tensor& p = *params_[i];
      if (p.grad.size() != p.data.size()) {
        throw ShapeMismatch("nadam: gradient missing or mis-shaped for a parameter");
      }
      const auto& g = p.grad;
      m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * g;
      v_[i] = cfg_.beta2 * v_[i].array().matrix() +
              (1.0 - cfg_.beta2) * g.array().square().matrix();

      const Eigen::ArrayXd g_hat = g.array() / (1.0 - mu_prod_t);
      const Eigen::ArrayXd m_hat = m_[i].array() / (1.0 - mu_prod_next);
      const Eigen::ArrayXd v_hat = v_[i].array() / v_corr;
      const Eigen::ArrayXd m_bar = (1.0 - mu_t) * g_hat + mu_next * m_hat;
      p.data.array() -= cfg_.learning_rate * m_bar / (v_hat.sqrt() + cfg_.epsilon);
    }
    mu_product_ = mu_prod_t;
  }

 private:
  NadamConfig cfg_;
  std::vector<Tensor*> params_;
  std::vector<Eigen::VectorXd> m_, v_;
  long t_ = 0;
  double mu_product_ = 1.0;
};

}  // namespace pdgait::nn
