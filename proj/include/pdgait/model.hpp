// The gait classifier: one 1D-Convnet branch per active VGRF channel
// (conv 8 k3, conv 16 k3, pool 2, conv 16 k3, conv 16 k3, pool 2, flatten,
// dense 100), branch outputs concatenated into a fully connected head
// (dense 100, dense 20, output). Hidden activations are SeLU; the output is
// sigmoid for detection and a 5-way softmax for severity. Branches do not
// share weights.
#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "pdgait/channels.hpp"
#include "pdgait/errors.hpp"
#include "pdgait/nn/layers.hpp"
#include "pdgait/nn/tensor.hpp"
#include "pdgait/rng.hpp"

namespace pdgait {

enum class HeadKind : int { Detection = 0, Severity = 1 };

inline constexpr int kSeverityClasses = 5;

struct ModelConfig {
  int window_len = 100;
  std::vector<Channel> channels{kAllChannels.begin(), kAllChannels.end()};
  HeadKind head = HeadKind::Detection;
  double branch_dropout = 0.5;
  double concat_dropout = 0.5;
  double head_dropout = 0.5;

  int n_channels() const { return static_cast<int>(channels.size()); }
  int output_units() const { return head == HeadKind::Detection ? 1 : kSeverityClasses; }
};

// Per-branch length bookkeeping for the fixed conv stack.
struct BranchShapes {
  int conv1_len, conv2_len, pool1_len, conv3_len, conv4_len, pool2_len;
  int flat_len;
};

inline BranchShapes branch_shapes(int window_len) {
  BranchShapes s{};
  s.conv1_len = window_len - 2;
  s.conv2_len = s.conv1_len - 2;
  s.pool1_len = s.conv2_len / 2;
  s.conv3_len = s.pool1_len - 2;
  s.conv4_len = s.conv3_len - 2;
  s.pool2_len = s.conv4_len / 2;
  s.flat_len = s.pool2_len * 16;
  if (s.pool2_len < 1) {
    throw ShapeMismatch("window_len " + std::to_string(window_len) +
                        " is too short for the conv stack");
  }
  return s;
}

class Network {
 public:
  explicit Network(ModelConfig cfg) : cfg_(std::move(cfg)), shapes_(branch_shapes(cfg_.window_len)) {
    if (cfg_.channels.empty()) throw ShapeMismatch("model needs at least one active channel");
    branches_.reserve(cfg_.channels.size());
    for (std::size_t i = 0; i < cfg_.channels.size(); ++i) {
      branches_.push_back(std::make_unique<Branch>(shapes_, cfg_.branch_dropout));
    }
    const int concat_width = kBranchUnits * cfg_.n_channels();
    head_ = std::make_unique<Head>(concat_width, cfg_.output_units(), cfg_.concat_dropout,
                                   cfg_.head_dropout);
  }

  Network(const Network& other) : Network(other.cfg_) { copy_params_from(other); }
  Network& operator=(const Network& other) {
    if (this != &other) {
      if (!same_config(cfg_, other.cfg_)) throw ShapeMismatch("assigning incompatible network");
      copy_params_from(other);
    }
    return *this;
  }
  Network(Network&&) = default;
  Network& operator=(Network&&) = default;

  static bool same_config(const ModelConfig& a, const ModelConfig& b) {
    return a.window_len == b.window_len && a.channels == b.channels && a.head == b.head &&
           a.branch_dropout == b.branch_dropout && a.concat_dropout == b.concat_dropout &&
           a.head_dropout == b.head_dropout;
  }

  const ModelConfig& config() const { return cfg_; }
  const BranchShapes& shapes() const { return shapes_; }

  void init_params(Rng& rng) {
    for (auto& br : branches_) br->init(rng);
    head_->init(rng);
  }

  // x: (batch * window_len) x n_channels, one column per active channel in
  // config order. Returns batch x 1 probabilities (detection) or batch x 5
  // softmax rows (severity).
  Eigen::MatrixXd forward(const Eigen::MatrixXd& x, int batch, nn::Mode mode, Rng* rng = nullptr) {
    if (x.rows() != static_cast<Eigen::Index>(batch) * cfg_.window_len ||
        x.cols() != cfg_.n_channels()) {
      throw ShapeMismatch("network input shape");
    }
    const int n = cfg_.n_channels();
    Eigen::MatrixXd concat(batch, static_cast<Eigen::Index>(kBranchUnits) * n);
    for (int i = 0; i < n; ++i) {
      concat.middleCols(static_cast<Eigen::Index>(i) * kBranchUnits, kBranchUnits) =
          branches_[static_cast<std::size_t>(i)]->forward(x.col(i), batch, mode, rng);
    }
    batch_cache_ = batch;
    Eigen::MatrixXd logits = head_->forward(concat, mode, rng);
    if (cfg_.head == HeadKind::Detection) {
      prediction_ = sigmoid_.forward(logits);
    } else {
      prediction_ = nn::softmax_rows(logits);
    }
    return prediction_;
  }

  const Eigen::MatrixXd& last_prediction() const { return prediction_; }

  // Branch i's output after its dense layer (and dropout), cached by the
  // last forward pass.
  const Eigen::MatrixXd& branch_output(int i) const {
    return branches_[static_cast<std::size_t>(i)]->last_output();
  }

  // Upstream gradient w.r.t. the output-layer logits (the sigmoid/softmax
  // cross-entropy pairing folds to prediction - target there).
  void backward(const Eigen::MatrixXd& dlogits, int batch) {
    if (batch != batch_cache_) throw MissingForwardCache("network backward without forward");
    Eigen::MatrixXd dconcat = head_->backward(dlogits);
    for (int i = 0; i < cfg_.n_channels(); ++i) {
      branches_[static_cast<std::size_t>(i)]->backward(
          dconcat.middleCols(static_cast<Eigen::Index>(i) * kBranchUnits, kBranchUnits), batch);
    }
  }

  void zero_grad() {
    for (auto* t : parameters()) t->zero_grad();
  }

  std::vector<nn::Tensor*> parameters() {
    std::vector<nn::Tensor*> out;
    for (auto& named : named_parameters()) out.push_back(named.second);
    return out;
  }

  std::vector<std::pair<std::string, nn::Tensor*>> named_parameters() {
    std::vector<std::pair<std::string, nn::Tensor*>> out;
    for (std::size_t i = 0; i < branches_.size(); ++i) {
      const std::string prefix = "branch" + std::to_string(i) + ".";
      branches_[i]->collect(prefix, out);
    }
    head_->collect("head.", out);
    return out;
  }

  std::vector<std::pair<std::string, const nn::Tensor*>> named_parameters() const {
    auto* self = const_cast<Network*>(this);
    std::vector<std::pair<std::string, const nn::Tensor*>> out;
    for (auto& [name, t] : self->named_parameters()) out.emplace_back(name, t);
    return out;
  }

  long param_count() const {
    long n = 0;
    for (const auto& [name, t] : named_parameters()) n += static_cast<long>(t->size());
    return n;
  }

  bool all_finite() const {
    for (const auto& [name, t] : named_parameters()) {
      if (!t->all_finite()) return false;
    }
    return true;
  }

  static constexpr int kBranchUnits = 100;

 private:
  struct Branch {
    Branch(const BranchShapes& shapes, double dropout_rate)
        : conv1(1, 8, 3),
          conv2(8, 16, 3),
          pool1(2),
          conv3(16, 16, 3),
          conv4(16, 16, 3),
          pool2(2),
          fc(shapes.flat_len, kBranchUnits),
          drop(dropout_rate),
          shapes_(shapes) {}

    void init(Rng& rng) {
      conv1.init(rng);
      conv2.init(rng);
      conv3.init(rng);
      conv4.init(rng);
      fc.init(rng);
    }

    Eigen::MatrixXd forward(const Eigen::MatrixXd& x, int batch, nn::Mode mode, Rng* rng) {
      Eigen::MatrixXd a = act1.forward(conv1.forward(x, batch));
      a = act2.forward(conv2.forward(a, batch));
      a = pool1.forward(a, batch);
      a = act3.forward(conv3.forward(a, batch));
      a = act4.forward(conv4.forward(a, batch));
      a = pool2.forward(a, batch);
      Eigen::MatrixXd f = nn::flatten_rows(a, batch);
      f = act5.forward(fc.forward(f));
      out_cache_ = drop.forward(f, mode, rng);
      return out_cache_;
    }

    void backward(const Eigen::MatrixXd& dout, int batch) {
      Eigen::MatrixXd d = drop.backward(dout);
      d = fc.backward(act5.backward(d));
      d = nn::unflatten_rows(d, batch, shapes_.pool2_len, 16);
      d = pool2.backward(d, batch);
      d = conv4.backward(act4.backward(d), batch);
      d = conv3.backward(act3.backward(d), batch);
      d = pool1.backward(d, batch);
      d = conv2.backward(act2.backward(d), batch);
      conv1.backward(act1.backward(d), batch);
    }

    void collect(const std::string& prefix, std::vector<std::pair<std::string, nn::Tensor*>>& out) {
      out.emplace_back(prefix + "conv1.w", &conv1.w);
      out.emplace_back(prefix + "conv1.b", &conv1.b);
      out.emplace_back(prefix + "conv2.w", &conv2.w);
      out.emplace_back(prefix + "conv2.b", &conv2.b);
      out.emplace_back(prefix + "conv3.w", &conv3.w);
      out.emplace_back(prefix + "conv3.b", &conv3.b);
      out.emplace_back(prefix + "conv4.w", &conv4.w);
      out.emplace_back(prefix + "conv4.b", &conv4.b);
      out.emplace_back(prefix + "fc.w", &fc.w);
      out.emplace_back(prefix + "fc.b", &fc.b);
    }

    const Eigen::MatrixXd& last_output() const { return out_cache_; }

    nn::Conv1d conv1, conv2;
    nn::MaxPool1d pool1;
    nn::Conv1d conv3, conv4;
    nn::MaxPool1d pool2;
    nn::Dense fc;
    nn::Dropout drop;
    nn::Selu act1, act2, act3, act4, act5;

   private:
    BranchShapes shapes_;
    Eigen::MatrixXd out_cache_;
  };

  struct Head {
    Head(int concat_width, int output_units, double concat_dropout, double head_dropout)
        : drop_concat(concat_dropout),
          fc1(concat_width, 100),
          drop1(head_dropout),
          fc2(100, 20),
          drop2(head_dropout),
          out(20, output_units) {}

    void init(Rng& rng) {
      fc1.init(rng);
      fc2.init(rng);
      out.init(rng);
    }

    Eigen::MatrixXd forward(const Eigen::MatrixXd& concat, nn::Mode mode, Rng* rng) {
      Eigen::MatrixXd a = drop_concat.forward(concat, mode, rng);
      a = drop1.forward(act1.forward(fc1.forward(a)), mode, rng);
      a = drop2.forward(act2.forward(fc2.forward(a)), mode, rng);
      return out.forward(a);
    }

    Eigen::MatrixXd backward(const Eigen::MatrixXd& dlogits) {
      Eigen::MatrixXd d = out.backward(dlogits);
      d = fc2.backward(act2.backward(drop2.backward(d)));
      d = fc1.backward(act1.backward(drop1.backward(d)));
      return drop_concat.backward(d);
    }

    void collect(const std::string& prefix, std::vector<std::pair<std::string, nn::Tensor*>>& out_vec) {
      out_vec.emplace_back(prefix + "fc1.w", &fc1.w);
      out_vec.emplace_back(prefix + "fc1.b", &fc1.b);
      out_vec.emplace_back(prefix + "fc2.w", &fc2.w);
      out_vec.emplace_back(prefix + "fc2.b", &fc2.b);
      out_vec.emplace_back(prefix + "out.w", &out.w);
      out_vec.emplace_back(prefix + "out.b", &out.b);
    }

    nn::Dropout drop_concat;
    nn::Dense fc1;
    nn::Dropout drop1;
    nn::Dense fc2;
    nn::Dropout drop2;
    nn::Dense out;
    nn::Selu act1, act2;
  };

  void copy_params_from(const Network& other) {
    auto mine = named_parameters();
    auto theirs = const_cast<Network&>(other).named_parameters();
    for (std::size_t i = 0; i < mine.size(); ++i) {
      mine[i].second->data = theirs[i].second->data;
    }
  }

  ModelConfig cfg_;
  BranchShapes shapes_;
  std::vector<std::unique_ptr<Branch>> branches_;
  std::unique_ptr<Head> head_;
  nn::Sigmoid sigmoid_;
  Eigen::MatrixXd prediction_;
  int batch_cache_ = -1;
};

// Window-level decisions. Detection: Parkinson iff p strictly above 0.5.
// Severity: argmax over the simplex, ties resolved toward the higher class;
// returns a class in 1..5.
inline int classify_detection(double probability) { return probability > 0.5 ? 1 : 0; }

inline int classify_severity(const Eigen::RowVectorXd& simplex) {
  int best = 0;
  for (int k = 1; k < static_cast<int>(simplex.size()); ++k) {
    if (simplex(k) >= simplex(best)) best = k;
  }
  return best + 1;
}

}  // namespace pdgait
