// Metrics and the cross-validation driver. Segment decisions come straight
// from the network; walk decisions aggregate the windows of one recording by
// majority vote (detection, ties toward Parkinson) or mode (severity, ties
// toward the higher class).
#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "pdgait/errors.hpp"
#include "pdgait/model.hpp"
#include "pdgait/training.hpp"
#include "pdgait/vgrf_data.hpp"
#include "pdgait/windowing.hpp"

namespace pdgait {

struct BinaryConfusion {
  long tp = 0, fn = 0, tn = 0, fp = 0;

  // truth/pred: 1 = Parkinson, 0 = control.
  void add(int truth, int pred) {
    if (truth == 1) {
      pred == 1 ? ++tp : ++fn;
    } else {
      pred == 1 ? ++fp : ++tn;
    }
  }
  long total() const { return tp + fn + tn + fp; }
  BinaryConfusion& operator+=(const BinaryConfusion& o) {
    tp += o.tp;
    fn += o.fn;
    tn += o.tn;
    fp += o.fp;
    return *this;
  }
};

struct DetectionMetrics {
  std::optional<double> sensitivity;  // tp / (tp + fn)
  std::optional<double> specificity;  // tn / (tn + fp)
  std::optional<double> accuracy;     // (tp + tn) / total
};

inline DetectionMetrics detection_metrics(const BinaryConfusion& c) {
  DetectionMetrics m;
  if (c.tp + c.fn > 0) m.sensitivity = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  if (c.tn + c.fp > 0) m.specificity = static_cast<double>(c.tn) / static_cast<double>(c.tn + c.fp);
  if (c.total() > 0) m.accuracy = static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
  return m;
}

struct MultiConfusion {
  // counts[truth][pred], classes 1..5 stored 0-based.
  std::array<std::array<long, kSeverityClasses>, kSeverityClasses> counts{};

  void add(int truth_class, int pred_class) {
    if (truth_class < 1 || truth_class > kSeverityClasses || pred_class < 1 ||
        pred_class > kSeverityClasses) {
      throw OutOfRange("severity class outside 1..5");
    }
    ++counts[static_cast<std::size_t>(truth_class - 1)][static_cast<std::size_t>(pred_class - 1)];
  }
  long support(int k) const {
    long n = 0;
    for (long v : counts[static_cast<std::size_t>(k)]) n += v;
    return n;
  }
  long predicted(int k) const {
    long n = 0;
    for (const auto& row : counts) n += row[static_cast<std::size_t>(k)];
    return n;
  }
  long diagonal() const {
    long n = 0;
    for (int k = 0; k < kSeverityClasses; ++k) n += counts[static_cast<std::size_t>(k)][static_cast<std::size_t>(k)];
    return n;
  }
  long total() const {
    long n = 0;
    for (int k = 0; k < kSeverityClasses; ++k) n += support(k);
    return n;
  }
  MultiConfusion& operator+=(const MultiConfusion& o) {
    for (std::size_t i = 0; i < counts.size(); ++i) {
      for (std::size_t j = 0; j < counts.size(); ++j) counts[i][j] += o.counts[i][j];
    }
    return *this;
  }
};

struct ClassMetrics {
  std::optional<double> precision;
  std::optional<double> recall;
  std::optional<double> f1;
  long support = 0;
};

struct MulticlassMetrics {
  std::array<ClassMetrics, kSeverityClasses> per_class;
  std::optional<double> accuracy;  // trace / total
  std::optional<double> weighted_precision;
  std::optional<double> weighted_recall;
  std::optional<double> weighted_f1;
  long total = 0;
};

// Weighted averages are support-weighted; a class whose metric is undefined
// (nothing predicted as it) contributes zero, matching the usual convention.
inline MulticlassMetrics multiclass_metrics(const MultiConfusion& c) {
  MulticlassMetrics m;
  m.total = c.total();
  double wp = 0.0, wr = 0.0, wf = 0.0;
  for (int k = 0; k < kSeverityClasses; ++k) {
    ClassMetrics& cm = m.per_class[static_cast<std::size_t>(k)];
    cm.support = c.support(k);
    const long pred = c.predicted(k);
    const long hit = c.counts[static_cast<std::size_t>(k)][static_cast<std::size_t>(k)];
    if (pred > 0) cm.precision = static_cast<double>(hit) / static_cast<double>(pred);
    if (cm.support > 0) cm.recall = static_cast<double>(hit) / static_cast<double>(cm.support);
    if (cm.precision && cm.recall) {
      const double pr = *cm.precision + *cm.recall;
      cm.f1 = pr > 0.0 ? 2.0 * *cm.precision * *cm.recall / pr : 0.0;
    }
    const double w = static_cast<double>(cm.support);
    wp += w * cm.precision.value_or(0.0);
    wr += w * cm.recall.value_or(0.0);
    wf += w * cm.f1.value_or(0.0);
  }
  if (m.total > 0) {
    const double n = static_cast<double>(m.total);
    m.accuracy = static_cast<double>(c.diagonal()) / n;
    m.weighted_precision = wp / n;
    m.weighted_recall = wr / n;
    m.weighted_f1 = wf / n;
  }
  return m;
}

// Walk-level vote: Parkinson when at least half the windows say Parkinson.
inline int aggregate_detection(long parkinson_windows, long total_windows) {
  if (total_windows <= 0) throw EmptyPredictionSet("no windows to aggregate");
  if (parkinson_windows < 0 || parkinson_windows > total_windows) {
    throw OutOfRange("vote count outside 0..total");
  }
  return 2 * parkinson_windows >= total_windows ? 1 : 0;
}

// Mode of the per-window classes, ties resolved toward the higher class.
inline int aggregate_severity(const std::array<long, kSeverityClasses>& votes) {
  long total = 0;
  for (long v : votes) {
    if (v < 0) throw OutOfRange("negative vote count");
    total += v;
  }
  if (total == 0) throw EmptyPredictionSet("no windows to aggregate");
  int best = 0;
  for (int k = 1; k < kSeverityClasses; ++k) {
    if (votes[static_cast<std::size_t>(k)] >= votes[static_cast<std::size_t>(best)]) best = k;
  }
  return best + 1;
}

// Per-window predicted labels, eval mode. Detection: 0/1. Severity: 1..5.
inline std::vector<int> predict_labels(Network& net, const WindowSet& ws,
                                       const std::vector<int>& idx, int eval_batch) {
  const auto cols = detail::channel_columns(net.config());
  const HeadKind head = net.config().head;
  std::vector<int> out;
  out.reserve(idx.size());
  for (std::size_t at = 0; at < idx.size(); at += static_cast<std::size_t>(eval_batch)) {
    const std::size_t end = std::min(idx.size(), at + static_cast<std::size_t>(eval_batch));
    const int b = static_cast<int>(end - at);
    const Eigen::MatrixXd x =
        ws.gather(std::span<const int>(idx.data() + at, static_cast<std::size_t>(b)), cols);
    const Eigen::MatrixXd pred = net.forward(x, b, nn::Mode::Eval);
    for (Eigen::Index j = 0; j < pred.rows(); ++j) {
      out.push_back(head == HeadKind::Detection ? classify_detection(pred(j, 0))
                                                : classify_severity(pred.row(j)));
    }
  }
  return out;
}

struct WalkVote {
  std::string walk_id;
  int truth = 0;  // detection: 0/1, severity: 1..5
  int pred = 0;
  long windows = 0;
};

struct FoldResult {
  int fold = 0;
  BinaryConfusion segment_bin, walk_bin;
  MultiConfusion segment_multi, walk_multi;
  double segment_accuracy = 0.0;
  double walk_accuracy = 0.0;
  std::vector<WalkVote> walk_votes;
  TrainLog log;
};

// Scores one validation set with a trained network and fills the fold's
// confusions and walk votes.
inline void score_fold(Network& net, const WindowSet& val_ws, FoldResult& fr, int eval_batch) {
  const HeadKind head = net.config().head;
  const auto idx = detail::usable_windows(val_ws, head);
  if (idx.empty()) throw EmptyPredictionSet("validation fold has no usable windows");
  const auto preds = predict_labels(net, val_ws, idx, eval_batch);

  struct Tally {
    int truth = 0;
    long total = 0;
    long positive = 0;
    std::array<long, kSeverityClasses> votes{};
  };
  std::map<std::string, Tally> by_walk;
  long correct = 0;
  for (std::size_t j = 0; j < idx.size(); ++j) {
    const int i = idx[j];
    const Walk& walk = val_ws.walk_of(i);
    Tally& t = by_walk[walk.walk_id];
    ++t.total;
    if (head == HeadKind::Detection) {
      const int truth = val_ws.detection_label(i);
      t.truth = truth;
      t.positive += preds[j] == 1;
      fr.segment_bin.add(truth, preds[j]);
      correct += preds[j] == truth;
    } else {
      const int truth = val_ws.severity_label(i);
      t.truth = truth;
      t.votes[static_cast<std::size_t>(preds[j] - 1)] += 1;
      fr.segment_multi.add(truth, preds[j]);
      correct += preds[j] == truth;
    }
  }
  fr.segment_accuracy = static_cast<double>(correct) / static_cast<double>(idx.size());

  long walk_correct = 0;
  for (const auto& [walk_id, t] : by_walk) {
    WalkVote v;
    v.walk_id = walk_id;
    v.truth = t.truth;
    v.windows = t.total;
    if (head == HeadKind::Detection) {
      v.pred = aggregate_detection(t.positive, t.total);
      fr.walk_bin.add(v.truth, v.pred);
    } else {
      v.pred = aggregate_severity(t.votes);
      fr.walk_multi.add(v.truth, v.pred);
    }
    walk_correct += v.pred == v.truth;
    fr.walk_votes.push_back(std::move(v));
  }
  fr.walk_accuracy = static_cast<double>(walk_correct) / static_cast<double>(by_walk.size());
}

struct CvConfig {
  HeadKind task = HeadKind::Detection;
  int folds = 10;
  std::uint64_t seed = 0;
  int window_len = kDefaultWindowLen;
  int stride = kDefaultStride;
  bool normalize = false;
  std::vector<Channel> channels{kAllChannels.begin(), kAllChannels.end()};
  TrainConfig train{};
  int jobs = 1;
};

struct AccuracySummary {
  double mean = 0.0;
  double sd = 0.0;  // sample standard deviation across folds
};

struct CvResult {
  HeadKind task = HeadKind::Detection;
  FoldPlan plan;
  std::vector<FoldResult> folds;
  BinaryConfusion segment_bin, walk_bin;
  MultiConfusion segment_multi, walk_multi;
  AccuracySummary segment_acc, walk_acc;
};

namespace detail {

inline constexpr std::uint64_t kTagFoldTrain = 0x74726169;  // "trai"

inline AccuracySummary summarize(const std::vector<double>& xs) {
  AccuracySummary s;
  if (xs.empty()) return s;
  double sum = 0.0;
  for (double x : xs) sum += x;
  s.mean = sum / static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double sq = 0.0;
    for (double x : xs) sq += (x - s.mean) * (x - s.mean);
    s.sd = std::sqrt(sq / static_cast<double>(xs.size() - 1));
  }
  return s;
}

}  // namespace detail

// Fires once per finished fold (any thread, serialized by a mutex) so the
// caller can persist checkpoints and logs. The train WindowSet carries the
// fold's normalization stats.
using FoldSink = std::function<void(const FoldResult&, Network& best, const WindowSet& train_ws)>;

// Fires at every round boundary inside a fold's training run, with the best
// weights so far.
using RoundSink = std::function<void(int fold, int round, Network& best, const WindowSet& train_ws)>;

inline CvResult run_cv(const Dataset& dataset, const CvConfig& cfg, const FoldSink& sink = {},
                       const RoundSink& round_sink = {}) {
  if (cfg.jobs < 1) throw ConfigError("jobs must be >= 1");
  CvResult result;
  result.task = cfg.task;
  result.plan = build_folds(dataset, cfg.folds, cfg.seed);
  result.folds.resize(static_cast<std::size_t>(cfg.folds));

  std::atomic<int> next{0};
  std::mutex sink_mu;
  std::exception_ptr first_error;
  std::mutex error_mu;

  auto worker = [&]() {
    for (;;) {
      const int f = next.fetch_add(1);
      if (f >= cfg.folds) return;
      try {
        auto [train_ws, val_ws] =
            materialize_fold(dataset, result.plan, f, cfg.window_len, cfg.stride, cfg.normalize);
        ModelConfig mcfg;
        mcfg.window_len = cfg.window_len;
        mcfg.channels = cfg.channels;
        mcfg.head = cfg.task;
        TrainConfig tcfg = cfg.train;
        tcfg.seed = mix_seed(cfg.seed, detail::kTagFoldTrain, static_cast<std::uint64_t>(f));
        std::function<void(int, Network&)> on_round;
        if (round_sink) {
          on_round = [&](int round, Network& best) {
            std::lock_guard<std::mutex> lock(sink_mu);
            round_sink(f, round, best, train_ws);
          };
        }
        TrainResult trained = train_model(train_ws, val_ws, mcfg, tcfg, {}, on_round);

        FoldResult& fr = result.folds[static_cast<std::size_t>(f)];
        fr.fold = f;
        fr.log = std::move(trained.log);
        score_fold(trained.net, val_ws, fr, tcfg.batch_size);
        if (sink) {
          std::lock_guard<std::mutex> lock(sink_mu);
          sink(fr, trained.net, train_ws);
        }
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mu);
        if (!first_error) first_error = std::current_exception();
        next.store(cfg.folds);
        return;
      }
    }
  };

  if (cfg.jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    const int n_threads = std::min(cfg.jobs, cfg.folds);
    pool.reserve(static_cast<std::size_t>(n_threads));
    for (int i = 0; i < n_threads; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (first_error) std::rethrow_exception(first_error);

  std::vector<double> seg_accs, walk_accs;
  for (const FoldResult& fr : result.folds) {
    result.segment_bin += fr.segment_bin;
    result.walk_bin += fr.walk_bin;
    result.segment_multi += fr.segment_multi;
    result.walk_multi += fr.walk_multi;
    seg_accs.push_back(fr.segment_accuracy);
    walk_accs.push_back(fr.walk_accuracy);
  }
  result.segment_acc = detail::summarize(seg_accs);
  result.walk_acc = detail::summarize(walk_accs);
  return result;
}

// Symmetric sensor-pair ablation: rerun the same cross-validation with one
// left/right pair removed and report how the scores move.
struct AblationRow {
  SensorPair pair;
  CvResult cv;
};

struct AblationResult {
  CvResult baseline;  // all channels
  std::vector<AblationRow> rows;
};

inline AblationResult run_ablation(const Dataset& dataset, const CvConfig& cfg,
                                   const std::vector<SensorPair>& pairs) {
  AblationResult out;
  out.baseline = run_cv(dataset, cfg);
  for (const SensorPair& pair : pairs) {
    CvConfig ablated = cfg;
    ablated.channels.clear();
    for (Channel c : cfg.channels) {
      if (c != pair.left && c != pair.right) ablated.channels.push_back(c);
    }
    if (ablated.channels.empty()) throw ConfigError("ablation removed every channel");
    AblationRow row;
    row.pair = pair;
    row.cv = run_cv(dataset, ablated);
    out.rows.push_back(std::move(row));
  }
  return out;
}

}  // namespace pdgait
