// Training loop: Nadam on shuffled mini-batches, early stopping on validation
// segment accuracy with patience, then restart from the best weights at half
// the learning rate. The restart schedule lives in EarlyStoppingSchedule so it
// can be driven and inspected without running a real network.
#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "pdgait/errors.hpp"
#include "pdgait/model.hpp"
#include "pdgait/nn/loss.hpp"
#include "pdgait/nn/nadam.hpp"
#include "pdgait/rng.hpp"
#include "pdgait/windowing.hpp"

namespace pdgait {

struct TrainConfig {
  int batch_size = 800;
  double initial_lr = 1e-3;
  int patience = 10;
  int lr_halvings = 4;  // restarts after the first round; 4 halvings = 5 rounds
  int max_epochs_per_round = 500;
  std::uint64_t seed = 0;
  nn::NadamConfig nadam{};
};

struct EpochRecord {
  int round = 0;
  int epoch = 0;  // global, 0-based
  int steps = 0;  // optimizer steps this epoch = number of batches
  double learning_rate = 0.0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
  bool improved = false;
  double seconds = 0.0;
};

struct TrainLog {
  std::vector<EpochRecord> epochs;
  int best_epoch = -1;
  int best_round = -1;
  double best_val_accuracy = -1.0;
};

// Pure schedule: feed one validation accuracy per epoch, read back what the
// trainer should do. Improvement is strict and measured against the best
// accuracy seen in any round. A round ends after `patience` epochs without
// improvement (or at the epoch cap); each of the `halvings` restarts resumes
// from the best weights at half the previous rate.
class EarlyStoppingSchedule {
 public:
  EarlyStoppingSchedule(double initial_lr, int patience, int halvings, int max_epochs_per_round)
      : lr_(initial_lr),
        patience_(patience),
        halvings_(halvings),
        max_epochs_(max_epochs_per_round) {
    if (patience_ < 1 || halvings_ < 0 || max_epochs_ < 1 || !(initial_lr > 0.0)) {
      throw ConfigError("bad early stopping schedule");
    }
  }

  struct Outcome {
    bool improved = false;
    bool round_ended = false;
    bool finished = false;
  };

  Outcome observe(double val_accuracy) {
    if (finished_) throw ConfigError("observe() after the schedule finished");
    ++epochs_this_round_;
    Outcome out;
    if (val_accuracy > best_) {
      best_ = val_accuracy;
      stall_ = 0;
      out.improved = true;
    } else {
      ++stall_;
    }
    if (stall_ >= patience_ || epochs_this_round_ >= max_epochs_) {
      out.round_ended = true;
      if (round_ == halvings_) {
        finished_ = true;
        out.finished = true;
      } else {
        ++round_;
        lr_ /= 2.0;
        stall_ = 0;
        epochs_this_round_ = 0;
      }
    }
    return out;
  }

  double learning_rate() const { return lr_; }
  int round() const { return round_; }
  int stall() const { return stall_; }
  int epochs_this_round() const { return epochs_this_round_; }
  double best() const { return best_; }
  bool finished() const { return finished_; }

 private:
  double lr_;
  int patience_;
  int halvings_;
  int max_epochs_;
  int round_ = 0;
  int epochs_this_round_ = 0;
  int stall_ = 0;
  double best_ = -std::numeric_limits<double>::infinity();
  bool finished_ = false;
};

namespace detail {

inline constexpr std::uint64_t kTagInit = 0x696E6974;     // "init"
inline constexpr std::uint64_t kTagShuffle = 0x73687566;  // "shuf"
inline constexpr std::uint64_t kTagDropout = 0x64726F70;  // "drop"

inline std::vector<int> channel_columns(const ModelConfig& cfg) {
  std::vector<int> cols;
  cols.reserve(cfg.channels.size());
  for (Channel c : cfg.channels) cols.push_back(static_cast<int>(c));
  return cols;
}

// Windows the task can learn from: everything for detection, labelled
// windows only for severity.
inline std::vector<int> usable_windows(const WindowSet& ws, HeadKind head) {
  std::vector<int> idx;
  idx.reserve(static_cast<std::size_t>(ws.size()));
  for (int i = 0; i < ws.size(); ++i) {
    if (head == HeadKind::Detection || ws.severity_label(i) > 0) idx.push_back(i);
  }
  return idx;
}

inline void assert_no_subject_leakage(const WindowSet& train, const WindowSet& val) {
  const auto a = train.subject_ids();
  const auto b = val.subject_ids();
  std::vector<std::string> shared;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(shared));
  if (!shared.empty()) {
    throw SubjectLeakage("subject " + shared.front() + " appears in both train and validation");
  }
}

struct BatchTargets {
  Eigen::VectorXd detection;  // 0/1
  std::vector<int> severity;  // 0-based class indices
};

inline BatchTargets batch_targets(const WindowSet& ws, const std::vector<int>& idx,
                                  std::size_t begin, std::size_t end, HeadKind head) {
  BatchTargets t;
  const auto n = static_cast<Eigen::Index>(end - begin);
  if (head == HeadKind::Detection) {
    t.detection.resize(n);
    for (Eigen::Index j = 0; j < n; ++j) {
      t.detection(j) = ws.detection_label(idx[begin + static_cast<std::size_t>(j)]);
    }
  } else {
    t.severity.resize(static_cast<std::size_t>(n));
    for (Eigen::Index j = 0; j < n; ++j) {
      t.severity[static_cast<std::size_t>(j)] =
          ws.severity_label(idx[begin + static_cast<std::size_t>(j)]) - 1;
    }
  }
  return t;
}

inline int batch_correct(const Eigen::MatrixXd& pred, const BatchTargets& t, HeadKind head) {
  int correct = 0;
  if (head == HeadKind::Detection) {
    for (Eigen::Index j = 0; j < pred.rows(); ++j) {
      if (classify_detection(pred(j, 0)) == static_cast<int>(t.detection(j))) ++correct;
    }
  } else {
    for (Eigen::Index j = 0; j < pred.rows(); ++j) {
      if (classify_severity(pred.row(j)) - 1 == t.severity[static_cast<std::size_t>(j)]) ++correct;
    }
  }
  return correct;
}

inline double batch_loss(const Eigen::MatrixXd& pred, const BatchTargets& t, HeadKind head) {
  return head == HeadKind::Detection ? nn::bce_loss(pred, t.detection).value
                                     : nn::cce_loss(pred, t.severity).value;
}

// d(mean cross entropy)/d(logits) for the sigmoid/softmax output pairing.
inline Eigen::MatrixXd fused_logit_grad(const Eigen::MatrixXd& pred, const BatchTargets& t,
                                        HeadKind head) {
  Eigen::MatrixXd d = pred;
  const double inv_b = 1.0 / static_cast<double>(pred.rows());
  if (head == HeadKind::Detection) {
    d.col(0) -= t.detection;
  } else {
    for (Eigen::Index j = 0; j < d.rows(); ++j) {
      d(j, t.severity[static_cast<std::size_t>(j)]) -= 1.0;
    }
  }
  d *= inv_b;
  return d;
}

}  // namespace detail

struct EvalStats {
  double loss = 0.0;
  double accuracy = 0.0;
  int windows = 0;
};

// Forward pass over `idx` in eval mode, mean loss and accuracy.
inline EvalStats evaluate_windows(Network& net, const WindowSet& ws, const std::vector<int>& idx,
                                  int eval_batch) {
  const auto cols = detail::channel_columns(net.config());
  const HeadKind head = net.config().head;
  EvalStats stats;
  stats.windows = static_cast<int>(idx.size());
  if (idx.empty()) return stats;
  double loss_sum = 0.0;
  int correct = 0;
  for (std::size_t at = 0; at < idx.size(); at += static_cast<std::size_t>(eval_batch)) {
    const std::size_t end = std::min(idx.size(), at + static_cast<std::size_t>(eval_batch));
    const int b = static_cast<int>(end - at);
    const Eigen::MatrixXd x =
        ws.gather(std::span<const int>(idx.data() + at, static_cast<std::size_t>(b)), cols);
    const Eigen::MatrixXd pred = net.forward(x, b, nn::Mode::Eval);
    const auto targets = detail::batch_targets(ws, idx, at, end, head);
    loss_sum += detail::batch_loss(pred, targets, head) * b;
    correct += detail::batch_correct(pred, targets, head);
  }
  stats.loss = loss_sum / static_cast<double>(idx.size());
  stats.accuracy = static_cast<double>(correct) / static_cast<double>(idx.size());
  return stats;
}

struct TrainResult {
  Network net;  // best weights
  TrainLog log;
};

// on_round_end(round_index, best_network_so_far) fires after each round,
// before the learning rate is halved.
inline TrainResult train_model(
    const WindowSet& train_ws, const WindowSet& val_ws, const ModelConfig& mcfg,
    const TrainConfig& tcfg,
    const std::function<void(const EpochRecord&)>& on_epoch = {},
    const std::function<void(int, Network&)>& on_round_end = {}) {
  if (tcfg.batch_size < 1) throw ConfigError("batch_size must be positive");
  detail::assert_no_subject_leakage(train_ws, val_ws);

  const auto cols = detail::channel_columns(mcfg);
  const auto train_idx = detail::usable_windows(train_ws, mcfg.head);
  const auto val_idx = detail::usable_windows(val_ws, mcfg.head);
  if (train_idx.empty()) throw EmptyDataset("no usable training windows");
  if (val_idx.empty()) throw EmptyDataset("no usable validation windows");

  Rng init_rng(mix_seed(tcfg.seed, detail::kTagInit));
  Rng shuffle_rng(mix_seed(tcfg.seed, detail::kTagShuffle));
  Rng dropout_rng(mix_seed(tcfg.seed, detail::kTagDropout));

  Network net(mcfg);
  net.init_params(init_rng);
  Network best = net;

  nn::NadamConfig ncfg = tcfg.nadam;
  ncfg.learning_rate = tcfg.initial_lr;
  nn::Nadam opt(ncfg);
  opt.attach(net.parameters());

  EarlyStoppingSchedule sched(tcfg.initial_lr, tcfg.patience, tcfg.lr_halvings,
                              tcfg.max_epochs_per_round);
  TrainLog log;
  std::vector<int> order = train_idx;
  int global_epoch = 0;

  while (!sched.finished()) {
    const auto t0 = std::chrono::steady_clock::now();
    opt.set_learning_rate(sched.learning_rate());
    shuffle_rng.shuffle(order);

    double loss_sum = 0.0;
    int correct = 0;
    int steps = 0;
    for (std::size_t at = 0; at < order.size(); at += static_cast<std::size_t>(tcfg.batch_size)) {
      const std::size_t end = std::min(order.size(), at + static_cast<std::size_t>(tcfg.batch_size));
      const int b = static_cast<int>(end - at);
      const Eigen::MatrixXd x =
          train_ws.gather(std::span<const int>(order.data() + at, static_cast<std::size_t>(b)), cols);
      const Eigen::MatrixXd pred = net.forward(x, b, nn::Mode::Train, &dropout_rng);
      const auto targets = detail::batch_targets(train_ws, order, at, end, mcfg.head);
      const double loss = detail::batch_loss(pred, targets, mcfg.head);
      if (!std::isfinite(loss)) {
        throw NonFiniteLoss("epoch " + std::to_string(global_epoch) + ": loss is not finite");
      }
      loss_sum += loss * b;
      correct += detail::batch_correct(pred, targets, mcfg.head);
      net.zero_grad();
      net.backward(detail::fused_logit_grad(pred, targets, mcfg.head), b);
      opt.step();
      ++steps;
    }
    if (!net.all_finite()) {
      throw NonFiniteLoss("epoch " + std::to_string(global_epoch) + ": parameters diverged");
    }

    const EvalStats val = evaluate_windows(net, val_ws, val_idx, tcfg.batch_size);
    EpochRecord rec;
    rec.round = sched.round();
    rec.epoch = global_epoch;
    rec.steps = steps;
    rec.learning_rate = sched.learning_rate();
    rec.train_loss = loss_sum / static_cast<double>(order.size());
    rec.train_accuracy = static_cast<double>(correct) / static_cast<double>(order.size());
    rec.val_loss = val.loss;
    rec.val_accuracy = val.accuracy;

    const auto outcome = sched.observe(val.accuracy);
    rec.improved = outcome.improved;
    if (outcome.improved) {
      best = net;
      log.best_epoch = global_epoch;
      log.best_round = rec.round;
      log.best_val_accuracy = val.accuracy;
    }
    rec.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    log.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);

    if (outcome.round_ended) {
      if (on_round_end) on_round_end(rec.round, best);
      if (!outcome.finished) {
        net = best;   // restart from the best weights
        opt.reset();  // fresh optimizer state for the new rate
      }
    }
    ++global_epoch;
  }
  return {std::move(best), std::move(log)};
}

inline void write_train_log_csv(const std::filesystem::path& path, const TrainLog& log) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw CorruptFile("cannot open " + path.string() + " for writing");
  out << "round,epoch,steps,learning_rate,train_loss,train_accuracy,val_loss,val_accuracy,improved,seconds\n";
  char line[256];
  for (const auto& r : log.epochs) {
    std::snprintf(line, sizeof(line), "%d,%d,%d,%.10g,%.10g,%.10g,%.10g,%.10g,%d,%.3f\n", r.round,
                  r.epoch, r.steps, r.learning_rate, r.train_loss, r.train_accuracy, r.val_loss,
                  r.val_accuracy, r.improved ? 1 : 0, r.seconds);
    out << line;
  }
}

}  // namespace pdgait
