// Fixed-length window segmentation (100 steps, 50% overlap by default) and
// subject-level stratified cross-validation folds. Segmentation happens
// inside each fold, so a subject's windows never straddle the train/val
// boundary.
#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "pdgait/errors.hpp"
#include "pdgait/rng.hpp"
#include "pdgait/vgrf_data.hpp"

namespace pdgait {

inline constexpr int kDefaultWindowLen = 100;
inline constexpr int kDefaultStride = 50;

// Start offsets of all full windows in a walk of length total_len.
inline std::vector<int> window_starts(int total_len, int window_len, int stride) {
  if (window_len < 1) throw OutOfRange("window_len must be >= 1");
  if (stride < 1 || stride > window_len) {
    throw OutOfRange("stride must be in [1, window_len]");
  }
  std::vector<int> starts;
  if (total_len < window_len) return starts;
  const int count = (total_len - window_len) / stride + 1;
  starts.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) starts.push_back(i * stride);
  return starts;
}

struct Window {
  std::string walk_id;
  std::string subject_id;
  int start_index = 0;
  Eigen::MatrixXd values;  // window_len x 18
  int detection_label = 0;  // Control=0, Parkinson=1
  std::optional<int> severity_label;  // 1..5
};

inline std::vector<Window> segment_walk(const Walk& walk, int window_len, int stride) {
  std::vector<Window> out;
  const auto starts = window_starts(static_cast<int>(walk.samples.rows()), window_len, stride);
  out.reserve(starts.size());
  for (int s : starts) {
    Window w;
    w.walk_id = walk.walk_id;
    w.subject_id = walk.subject_id;
    w.start_index = s;
    w.values = walk.samples.middleRows(s, window_len);
    w.detection_label = walk.group == Group::Parkinson ? 1 : 0;
    w.severity_label = walk.severity_class();
    out.push_back(std::move(w));
  }
  return out;
}

// A labeled set of window references into a Dataset. Values are gathered on
// demand so the full-scale corpus (~64k windows) is not duplicated per fold;
// the optional per-channel z-score (train statistics) is applied at gather
// time.
class WindowSet {
 public:
  struct Ref {
    int walk_index;
    int start;
  };

  WindowSet() = default;
  WindowSet(const Dataset* dataset, int window_len, int stride)
      : dataset_(dataset), window_len_(window_len), stride_(stride) {}

  void add_walk(int walk_index) {
    const Walk& walk = dataset_->walks[static_cast<std::size_t>(walk_index)];
    const auto starts =
        window_starts(static_cast<int>(walk.samples.rows()), window_len_, stride_);
    if (starts.empty()) {
      short_walks_.push_back(walk.walk_id);
      return;
    }
    const std::int8_t det = walk.group == Group::Parkinson ? 1 : 0;
    const auto sev = walk.severity_class();
    for (int s : starts) {
      refs_.push_back({walk_index, s});
      detection_labels_.push_back(det);
      severity_labels_.push_back(static_cast<std::int8_t>(sev ? *sev : 0));
    }
  }

  int size() const { return static_cast<int>(refs_.size()); }
  int window_len() const { return window_len_; }
  int stride() const { return stride_; }
  const Dataset& dataset() const { return *dataset_; }
  const std::vector<Ref>& refs() const { return refs_; }
  const std::vector<std::string>& short_walks() const { return short_walks_; }

  int detection_label(int i) const { return detection_labels_[static_cast<std::size_t>(i)]; }
  // 0 means "no severity label" (Parkinson subject without a UPDRS score).
  int severity_label(int i) const { return severity_labels_[static_cast<std::size_t>(i)]; }

  const Walk& walk_of(int i) const {
    return dataset_->walks[static_cast<std::size_t>(refs_[static_cast<std::size_t>(i)].walk_index)];
  }

  std::set<std::string> subject_ids() const {
    std::set<std::string> ids;
    for (const Ref& r : refs_) {
      ids.insert(dataset_->walks[static_cast<std::size_t>(r.walk_index)].subject_id);
    }
    return ids;
  }

  void set_normalization(const Eigen::VectorXd& mean, const Eigen::VectorXd& std) {
    if (mean.size() != kNumChannels || std.size() != kNumChannels) {
      throw ShapeMismatch("normalization stats must have 18 channels");
    }
    normalized_ = true;
    mean_ = mean;
    std_ = std;
  }
  bool normalized() const { return normalized_; }
  const Eigen::VectorXd& norm_mean() const { return mean_; }
  const Eigen::VectorXd& norm_std() const { return std_; }

  // Per-channel mean / population std over every sample of every window.
  void compute_normalization(Eigen::VectorXd& mean, Eigen::VectorXd& std) const {
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(kNumChannels);
    Eigen::VectorXd sum_sq = Eigen::VectorXd::Zero(kNumChannels);
    double n = 0.0;
    for (const Ref& r : refs_) {
      const auto block = dataset_->walks[static_cast<std::size_t>(r.walk_index)]
                             .samples.middleRows(r.start, window_len_);
      sum += block.colwise().sum().transpose();
      sum_sq += block.array().square().colwise().sum().matrix().transpose();
      n += static_cast<double>(window_len_);
    }
    mean = sum / n;
    std = (sum_sq / n - mean.array().square().matrix()).cwiseMax(0.0).cwiseSqrt();
    for (int c = 0; c < kNumChannels; ++c) {
      if (std(c) == 0.0) std(c) = 1.0;  // constant channel: shift only
    }
  }

  // Window i as a window_len x 18 matrix (normalized when stats are set).
  Eigen::MatrixXd values(int i) const {
    const Ref& r = refs_[static_cast<std::size_t>(i)];
    Eigen::MatrixXd block = dataset_->walks[static_cast<std::size_t>(r.walk_index)]
                                .samples.middleRows(r.start, window_len_);
    if (normalized_) {
      block = (block.rowwise() - mean_.transpose()).array().rowwise() /
              std_.transpose().array();
    }
    return block;
  }

  // Batch gather: rows = |idx| * window_len, one column per requested channel.
  // Sample j of the batch occupies rows [j*window_len, (j+1)*window_len).
  Eigen::MatrixXd gather(std::span<const int> idx, std::span<const int> channel_cols) const {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(idx.size()) * window_len_,
                        static_cast<Eigen::Index>(channel_cols.size()));
    for (std::size_t j = 0; j < idx.size(); ++j) {
      const Ref& r = refs_[static_cast<std::size_t>(idx[j])];
      const auto& samples = dataset_->walks[static_cast<std::size_t>(r.walk_index)].samples;
      for (std::size_t k = 0; k < channel_cols.size(); ++k) {
        const int c = channel_cols[k];
        auto dst = out.col(static_cast<Eigen::Index>(k))
                       .segment(static_cast<Eigen::Index>(j) * window_len_, window_len_);
        dst = samples.col(c).segment(r.start, window_len_);
        if (normalized_) {
          dst = (dst.array() - mean_(c)) / std_(c);
        }
      }
    }
    return out;
  }

 private:
  const Dataset* dataset_ = nullptr;
  int window_len_ = kDefaultWindowLen;
  int stride_ = kDefaultStride;
  std::vector<Ref> refs_;
  std::vector<std::int8_t> detection_labels_;
  std::vector<std::int8_t> severity_labels_;
  std::vector<std::string> short_walks_;
  bool normalized_ = false;
  Eigen::VectorXd mean_, std_;
};

// Subject-level fold assignment. Folds partition the subject set; each group
// is split into k near-equal parts so every fold keeps the corpus' Parkinson /
// control balance.
struct FoldPlan {
  std::vector<std::vector<std::string>> folds;
  std::uint64_t seed = 0;

  int fold_of(const std::string& subject_id) const {
    for (std::size_t f = 0; f < folds.size(); ++f) {
      for (const auto& s : folds[f]) {
        if (s == subject_id) return static_cast<int>(f);
      }
    }
    return -1;
  }

  void write(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw Error("cannot open for writing: " + path.string());
    out << "seed " << seed << "\n";
    for (std::size_t f = 0; f < folds.size(); ++f) {
      for (const auto& s : folds[f]) out << f << " " << s << "\n";
    }
    if (!out) throw Error("write failed: " + path.string());
  }

  static FoldPlan read(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open fold plan: " + path.string());
    FoldPlan plan;
    std::string line;
    std::vector<std::string_view> tok;
    while (std::getline(in, line)) {
      std::string_view sv = detail::strip_cr(line);
      if (auto pos = sv.find('#'); pos != std::string_view::npos) sv = sv.substr(0, pos);
      detail::split_ws(sv, tok);
      if (tok.empty()) continue;
      if (tok[0] == "seed" && tok.size() == 2) {
        plan.seed = std::stoull(std::string(tok[1]));
        continue;
      }
      if (tok.size() != 2) throw MalformedRow(path.string() + ": expected 'fold subject_id'");
      const std::size_t f = std::stoul(std::string(tok[0]));
      if (plan.folds.size() <= f) plan.folds.resize(f + 1);
      plan.folds[f].push_back(std::string(tok[1]));
    }
    if (plan.folds.empty()) throw ConfigError(path.string() + ": empty fold plan");
    return plan;
  }
};

inline FoldPlan build_folds(const Dataset& dataset, int k, std::uint64_t seed) {
  if (k < 2) throw OutOfRange("fold count must be >= 2");
  std::vector<std::string> parkinson, control;
  for (const SubjectInfo& s : dataset.subjects) {
    (s.group == Group::Parkinson ? parkinson : control).push_back(s.id);
  }
  for (const auto* group : {&parkinson, &control}) {
    if (static_cast<int>(group->size()) < k) {
      throw TooFewSubjects("group with " + std::to_string(group->size()) +
                           " subjects cannot be split into " + std::to_string(k) + " folds");
    }
  }

  FoldPlan plan;
  plan.seed = seed;
  plan.folds.assign(static_cast<std::size_t>(k), {});
  // Shuffle each group with its own derived stream, then deal round-robin:
  // fold sizes within a group differ by at most 1.
  const std::uint64_t kFoldTagParkinson = 0x70617A6BULL;
  const std::uint64_t kFoldTagControl = 0x636F6E74ULL;
  auto deal = [&](std::vector<std::string>& ids, std::uint64_t tag) {
    std::sort(ids.begin(), ids.end());
    Rng rng(mix_seed(seed, tag));
    rng.shuffle(ids);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      plan.folds[i % static_cast<std::size_t>(k)].push_back(std::move(ids[i]));
    }
  };
  deal(parkinson, kFoldTagParkinson);
  deal(control, kFoldTagControl);
  for (auto& fold : plan.folds) std::sort(fold.begin(), fold.end());
  return plan;
}

// Build the train/val window sets for one fold. Normalization statistics, if
// requested, come from the train windows only and are applied to both sides.
inline std::pair<WindowSet, WindowSet> materialize_fold(const Dataset& dataset,
                                                        const FoldPlan& plan, int fold_index,
                                                        int window_len = kDefaultWindowLen,
                                                        int stride = kDefaultStride,
                                                        bool normalize = false) {
  if (fold_index < 0 || fold_index >= static_cast<int>(plan.folds.size())) {
    throw OutOfRange("fold index " + std::to_string(fold_index) + " outside plan");
  }
  const auto& val_fold = plan.folds[static_cast<std::size_t>(fold_index)];
  std::set<std::string> val_subjects(val_fold.begin(), val_fold.end());

  WindowSet train(&dataset, window_len, stride);
  WindowSet val(&dataset, window_len, stride);
  for (int i = 0; i < static_cast<int>(dataset.walks.size()); ++i) {
    const bool in_val = val_subjects.count(dataset.walks[static_cast<std::size_t>(i)].subject_id) > 0;
    (in_val ? val : train).add_walk(i);
  }
  if (normalize) {
    Eigen::VectorXd mean, std;
    train.compute_normalization(mean, std);
    train.set_normalization(mean, std);
    val.set_normalization(mean, std);
  }
  return {std::move(train), std::move(val)};
}

}  // namespace pdgait
