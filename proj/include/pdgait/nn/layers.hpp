// The layers of the gait network, with analytic backward passes. Batched
// signals use the layout (batch * length) x channels: sample b occupies rows
// [b*L, (b+1)*L). Flat feature batches are batch x features. Convolutions are
// stride-1 "valid", pooling is non-overlapping.
#pragma once

#include <Eigen/Core>
#include <cmath>

#include "pdgait/errors.hpp"
#include "pdgait/nn/tensor.hpp"
#include "pdgait/rng.hpp"

namespace pdgait::nn {

enum class Mode { Train, Eval };

// SeLU self-normalizing constants.
inline constexpr double kSeluLambda = 1.0507009873554804934193349852946;
inline constexpr double kSeluAlpha = 1.6732632423543772848170429916717;

inline void lecun_normal_init(Tensor& t, Eigen::Index fan_in, Rng& rng) {
  const double sd = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (Eigen::Index i = 0; i < t.size(); ++i) t.data(i) = sd * rng.normal();
}

class Conv1d {
 public:
  Conv1d(int in_channels, int out_channels, int kernel)
      : in_ch_(in_channels), out_ch_(out_channels), k_(kernel) {
    w = Tensor({k_, in_ch_, out_ch_});  // row j*in_ch + c of the (k*in) x out matrix
    b = Tensor({out_ch_});
    w.alloc_grad();
    b.alloc_grad();
  }

  void init(Rng& rng) {
    lecun_normal_init(w, static_cast<Eigen::Index>(k_) * in_ch_, rng);
    b.data.setZero();
  }

  int out_len(int in_len) const { return in_len - k_ + 1; }
  int in_channels() const { return in_ch_; }
  int out_channels() const { return out_ch_; }
  int kernel() const { return k_; }

  // x: (batch * len) x in_ch -> (batch * (len-k+1)) x out_ch
  Eigen::MatrixXd forward(const Eigen::MatrixXd& x, int batch) {
    check_input(x, batch);
    const int len = static_cast<int>(x.rows()) / batch;
    x_cache_ = x;
    batch_cache_ = batch;

    Eigen::MatrixXd cols = im2col(x, batch, len);
    Eigen::MatrixXd y = cols * weight_matrix();
    y.rowwise() += b.data.transpose();
    return y;
  }

  // dy: (batch * out_len) x out_ch. Accumulates into w.grad / b.grad,
  // returns d(input).
  Eigen::MatrixXd backward(const Eigen::MatrixXd& dy, int batch) {
    if (batch_cache_ != batch || x_cache_.size() == 0) {
      throw MissingForwardCache("conv1d backward without matching forward");
    }
    const int len = static_cast<int>(x_cache_.rows()) / batch;
    const int lo = out_len(len);
    if (dy.rows() != static_cast<Eigen::Index>(batch) * lo || dy.cols() != out_ch_) {
      throw ShapeMismatch("conv1d upstream gradient shape");
    }

    Eigen::MatrixXd cols = im2col(x_cache_, batch, len);
    as_matrix(w.grad, static_cast<Eigen::Index>(k_) * in_ch_, out_ch_) +=
        cols.transpose() * dy;
    b.grad += dy.colwise().sum().transpose();

    Eigen::MatrixXd dcols = dy * weight_matrix().transpose();
    Eigen::MatrixXd dx = Eigen::MatrixXd::Zero(x_cache_.rows(), in_ch_);
    for (int j = 0; j < k_; ++j) {
      for (int c = 0; c < in_ch_; ++c) {
        for (int bi = 0; bi < batch; ++bi) {
          dx.col(c).segment(static_cast<Eigen::Index>(bi) * len + j, lo) +=
              dcols.col(static_cast<Eigen::Index>(j) * in_ch_ + c)
                  .segment(static_cast<Eigen::Index>(bi) * lo, lo);
        }
      }
    }
    return dx;
  }

  Tensor w, b;

 private:
  Eigen::Map<const Eigen::MatrixXd> weight_matrix() const {
    return as_matrix(w.data, static_cast<Eigen::Index>(k_) * in_ch_, out_ch_);
  }

  void check_input(const Eigen::MatrixXd& x, int batch) const {
    if (batch < 1 || x.rows() % batch != 0 || x.cols() != in_ch_) {
      throw ShapeMismatch("conv1d input shape");
    }
    if (static_cast<int>(x.rows()) / batch < k_) {
      throw ShapeMismatch("conv1d input shorter than kernel");
    }
  }

  Eigen::MatrixXd im2col(const Eigen::MatrixXd& x, int batch, int len) const {
    const int lo = out_len(len);
    Eigen::MatrixXd cols(static_cast<Eigen::Index>(batch) * lo,
                         static_cast<Eigen::Index>(k_) * in_ch_);
    for (int j = 0; j < k_; ++j) {
      for (int c = 0; c < in_ch_; ++c) {
        for (int bi = 0; bi < batch; ++bi) {
          cols.col(static_cast<Eigen::Index>(j) * in_ch_ + c)
              .segment(static_cast<Eigen::Index>(bi) * lo, lo) =
              x.col(c).segment(static_cast<Eigen::Index>(bi) * len + j, lo);
        }
      }
    }
    return cols;
  }

  int in_ch_, out_ch_, k_;
  Eigen::MatrixXd x_cache_;
  int batch_cache_ = -1;
};

class MaxPool1d {
 public:
  explicit MaxPool1d(int pool) : pool_(pool) {
    if (pool < 1) throw OutOfRange("pool size must be >= 1");
  }

  int out_len(int in_len) const { return in_len / pool_; }
  int pool() const { return pool_; }

  // (batch * len) x ch -> (batch * (len/pool)) x ch; the trailing remainder
  // samples are dropped. Ties route to the first maximum.
  Eigen::MatrixXd forward(const Eigen::MatrixXd& x, int batch) {
    if (batch < 1 || x.rows() % batch != 0) throw ShapeMismatch("maxpool input shape");
    const int len = static_cast<int>(x.rows()) / batch;
    const int lo = out_len(len);
    const Eigen::Index ch = x.cols();
    in_rows_ = x.rows();
    batch_cache_ = batch;
    Eigen::MatrixXd y(static_cast<Eigen::Index>(batch) * lo, ch);
    argmax_.resize(y.rows(), ch);
    for (int bi = 0; bi < batch; ++bi) {
      for (int t = 0; t < lo; ++t) {
        const Eigen::Index src = static_cast<Eigen::Index>(bi) * len + static_cast<Eigen::Index>(t) * pool_;
        const Eigen::Index dst = static_cast<Eigen::Index>(bi) * lo + t;
        for (Eigen::Index c = 0; c < ch; ++c) {
          Eigen::Index best = src;
          double best_v = x(src, c);
          for (int p = 1; p < pool_; ++p) {
            if (x(src + p, c) > best_v) {
              best_v = x(src + p, c);
              best = src + p;
            }
          }
          y(dst, c) = best_v;
          argmax_(dst, c) = best;
        }
      }
    }
    return y;
  }

  Eigen::MatrixXd backward(const Eigen::MatrixXd& dy, int batch) {
    if (batch_cache_ != batch || argmax_.size() == 0) {
      throw MissingForwardCache("maxpool backward without matching forward");
    }
    if (dy.rows() != argmax_.rows() || dy.cols() != argmax_.cols()) {
      throw ShapeMismatch("maxpool upstream gradient shape");
    }
    Eigen::MatrixXd dx = Eigen::MatrixXd::Zero(in_rows_, dy.cols());
    for (Eigen::Index r = 0; r < dy.rows(); ++r) {
      for (Eigen::Index c = 0; c < dy.cols(); ++c) {
        dx(argmax_(r, c), c) += dy(r, c);
      }
    }
    return dx;
  }

 private:
  int pool_;
  Eigen::Matrix<Eigen::Index, Eigen::Dynamic, Eigen::Dynamic> argmax_;
  Eigen::Index in_rows_ = 0;
  int batch_cache_ = -1;
};

class Dense {
 public:
  Dense(int in_features, int out_features) : in_(in_features), out_(out_features) {
    w = Tensor({in_, out_});
    b = Tensor({out_});
    w.alloc_grad();
    b.alloc_grad();
  }

  void init(Rng& rng) {
    lecun_normal_init(w, in_, rng);
    b.data.setZero();
  }

  int in_features() const { return in_; }
  int out_features() const { return out_; }

  // x: batch x in -> batch x out
  Eigen::MatrixXd forward(const Eigen::MatrixXd& x) {
    if (x.cols() != in_) throw ShapeMismatch("dense input width");
    x_cache_ = x;
    Eigen::MatrixXd y = x * as_matrix(w.data, in_, out_);
    y.rowwise() += b.data.transpose();
    return y;
  }

  Eigen::MatrixXd backward(const Eigen::MatrixXd& dy) {
    if (x_cache_.size() == 0) throw MissingForwardCache("dense backward without forward");
    if (dy.rows() != x_cache_.rows() || dy.cols() != out_) {
      throw ShapeMismatch("dense upstream gradient shape");
    }
    as_matrix(w.grad, in_, out_) += x_cache_.transpose() * dy;
    b.grad += dy.colwise().sum().transpose();
    return dy * as_matrix(w.data, in_, out_).transpose();
  }

  Tensor w, b;

 private:
  int in_, out_;
  Eigen::MatrixXd x_cache_;
};

inline double selu_scalar(double x) {
  return x > 0.0 ? kSeluLambda * x : kSeluLambda * kSeluAlpha * std::expm1(x);
}

class Selu {
 public:
  Eigen::MatrixXd forward(const Eigen::MatrixXd& x) {
    y_cache_ = x.unaryExpr([](double v) { return selu_scalar(v); });
    return y_cache_;
  }

  // d selu / dx is lambda for x > 0 and y + lambda*alpha otherwise; both
  // derive from the cached output (y > 0 <=> x > 0).
  Eigen::MatrixXd backward(const Eigen::MatrixXd& dy) {
    if (y_cache_.size() == 0) throw MissingForwardCache("selu backward without forward");
    if (dy.rows() != y_cache_.rows() || dy.cols() != y_cache_.cols()) {
      throw ShapeMismatch("selu upstream gradient shape");
    }
    return dy.array() * y_cache_.unaryExpr([](double y) {
                            return y > 0.0 ? kSeluLambda : y + kSeluLambda * kSeluAlpha;
                          }).array();
  }

 private:
  Eigen::MatrixXd y_cache_;
};

inline double sigmoid_scalar(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

class Sigmoid {
 public:
  Eigen::MatrixXd forward(const Eigen::MatrixXd& x) {
    y_cache_ = x.unaryExpr([](double v) { return sigmoid_scalar(v); });
    return y_cache_;
  }

  Eigen::MatrixXd backward(const Eigen::MatrixXd& dy) {
    if (y_cache_.size() == 0) throw MissingForwardCache("sigmoid backward without forward");
    return dy.array() * (y_cache_.array() * (1.0 - y_cache_.array()));
  }

 private:
  Eigen::MatrixXd y_cache_;
};

// Row-wise softmax with log-sum-exp stabilization.
inline Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits) {
  Eigen::MatrixXd p(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double m = logits.row(r).maxCoeff();
    Eigen::ArrayXd e = (logits.row(r).array() - m).exp();
    p.row(r) = (e / e.sum()).matrix();
  }
  return p;
}

// Jacobian-vector product of row-wise softmax: dx = p .* (dy - sum(dy .* p)).
inline Eigen::MatrixXd softmax_backward_rows(const Eigen::MatrixXd& p, const Eigen::MatrixXd& dy) {
  if (p.rows() != dy.rows() || p.cols() != dy.cols()) {
    throw ShapeMismatch("softmax upstream gradient shape");
  }
  Eigen::MatrixXd dx(p.rows(), p.cols());
  for (Eigen::Index r = 0; r < p.rows(); ++r) {
    const double dot = p.row(r).dot(dy.row(r));
    dx.row(r) = (p.row(r).array() * (dy.row(r).array() - dot)).matrix();
  }
  return dx;
}

// Inverted dropout: train mode zeroes with probability `rate` and scales
// survivors by 1/(1-rate); eval mode is the identity.
class Dropout {
 public:
  explicit Dropout(double rate) : rate_(rate) {
    if (rate < 0.0 || rate >= 1.0) throw OutOfRange("dropout rate must be in [0, 1)");
  }

  double rate() const { return rate_; }

  Eigen::MatrixXd forward(const Eigen::MatrixXd& x, Mode mode, Rng* rng) {
    if (mode == Mode::Eval || rate_ == 0.0) {
      identity_ = true;
      return x;
    }
    if (!rng) throw Error("dropout in train mode needs an rng");
    identity_ = false;
    const double keep = 1.0 - rate_;
    const double scale = 1.0 / keep;
    mask_.resize(x.rows(), x.cols());
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      for (Eigen::Index r = 0; r < x.rows(); ++r) {
        mask_(r, c) = rng->uniform() < rate_ ? 0.0 : scale;
      }
    }
    return x.cwiseProduct(mask_);
  }

  Eigen::MatrixXd backward(const Eigen::MatrixXd& dy) const {
    if (identity_) return dy;
    if (mask_.size() == 0) throw MissingForwardCache("dropout backward without forward");
    if (dy.rows() != mask_.rows() || dy.cols() != mask_.cols()) {
      throw ShapeMismatch("dropout upstream gradient shape");
    }
    return dy.cwiseProduct(mask_);
  }

 private:
  double rate_;
  Eigen::MatrixXd mask_;
  bool identity_ = true;
};

// (batch * len) x ch -> batch x (len * ch); feature index is t * ch + c.
inline Eigen::MatrixXd flatten_rows(const Eigen::MatrixXd& x, int batch) {
  if (batch < 1 || x.rows() % batch != 0) throw ShapeMismatch("flatten input shape");
  const int len = static_cast<int>(x.rows()) / batch;
  const Eigen::Index ch = x.cols();
  Eigen::MatrixXd y(batch, static_cast<Eigen::Index>(len) * ch);
  for (int bi = 0; bi < batch; ++bi) {
    for (int t = 0; t < len; ++t) {
      for (Eigen::Index c = 0; c < ch; ++c) {
        y(bi, static_cast<Eigen::Index>(t) * ch + c) =
            x(static_cast<Eigen::Index>(bi) * len + t, c);
      }
    }
  }
  return y;
}

inline Eigen::MatrixXd unflatten_rows(const Eigen::MatrixXd& g, int batch, int len, int ch) {
  if (g.rows() != batch || g.cols() != static_cast<Eigen::Index>(len) * ch) {
    throw ShapeMismatch("unflatten input shape");
  }
  Eigen::MatrixXd x(static_cast<Eigen::Index>(batch) * len, ch);
  for (int bi = 0; bi < batch; ++bi) {
    for (int t = 0; t < len; ++t) {
      for (int c = 0; c < ch; ++c) {
        x(static_cast<Eigen::Index>(bi) * len + t, c) =
            g(bi, static_cast<Eigen::Index>(t) * ch + c);
      }
    }
  }
  return x;
}

}  // namespace pdgait::nn
