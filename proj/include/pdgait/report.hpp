// Human-readable result tables and CSV dumps for the cross-validation and
// ablation runners. Text tables show percentages to one decimal; CSVs keep
// raw fractions.
#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "pdgait/errors.hpp"
#include "pdgait/evaluation.hpp"

namespace pdgait {
namespace detail {

inline std::string fmt_pct(std::optional<double> v) {
  if (!v) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f", *v * 100.0);
  return buf;
}

inline std::string fmt_frac(std::optional<double> v) {
  if (!v) return "";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.10g", *v);
  return buf;
}

inline std::string binary_block(const std::string& label, const BinaryConfusion& c) {
  const DetectionMetrics m = detection_metrics(c);
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "%-8s Se %-6s Sp %-6s Acc %-6s (tp %ld fn %ld tn %ld fp %ld, n %ld)\n",
                label.c_str(), fmt_pct(m.sensitivity).c_str(), fmt_pct(m.specificity).c_str(),
                fmt_pct(m.accuracy).c_str(), c.tp, c.fn, c.tn, c.fp, c.total());
  return buf;
}

inline std::string multiclass_block(const std::string& label, const MultiConfusion& c) {
  const MulticlassMetrics m = multiclass_metrics(c);
  std::string out = label + "\n";
  out += "  class  precision  recall  f1      n\n";
  char buf[160];
  for (int k = 0; k < kSeverityClasses; ++k) {
    const ClassMetrics& cm = m.per_class[static_cast<std::size_t>(k)];
    std::snprintf(buf, sizeof(buf), "  %-6d %-10s %-7s %-7s %ld\n", k + 1,
                  fmt_pct(cm.precision).c_str(), fmt_pct(cm.recall).c_str(),
                  fmt_pct(cm.f1).c_str(), cm.support);
    out += buf;
  }
  std::snprintf(buf, sizeof(buf), "  weighted avg: precision %s recall %s f1 %s, accuracy %s, n %ld\n",
                fmt_pct(m.weighted_precision).c_str(), fmt_pct(m.weighted_recall).c_str(),
                fmt_pct(m.weighted_f1).c_str(), fmt_pct(m.accuracy).c_str(), m.total);
  out += buf;
  return out;
}

inline std::string confusion_grid(const MultiConfusion& c, bool normalized) {
  std::string out = normalized ? "row-normalized confusion (truth x predicted)\n"
                               : "confusion counts (truth x predicted)\n";
  char buf[200];
  out += "        pred1   pred2   pred3   pred4   pred5\n";
  for (int i = 0; i < kSeverityClasses; ++i) {
    const long support = c.support(i);
    std::string row = "  true" + std::to_string(i + 1);
    for (int j = 0; j < kSeverityClasses; ++j) {
      const long n = c.counts[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
      if (normalized) {
        std::snprintf(buf, sizeof(buf), " %7.3f",
                      support > 0 ? static_cast<double>(n) / static_cast<double>(support) : 0.0);
      } else {
        std::snprintf(buf, sizeof(buf), " %7ld", n);
      }
      row += buf;
    }
    out += row + "\n";
  }
  return out;
}

}  // namespace detail

inline std::string format_cv_report(const CvResult& cv) {
  char buf[256];
  std::string out;
  const char* task = cv.task == HeadKind::Detection ? "detection" : "severity";
  std::snprintf(buf, sizeof(buf), "%s, %d-fold subject-level cross validation\n", task,
                static_cast<int>(cv.folds.size()));
  out += buf;
  if (cv.task == HeadKind::Detection) {
    out += detail::binary_block("windows:", cv.segment_bin);
    out += detail::binary_block("walks:", cv.walk_bin);
  } else {
    out += detail::multiclass_block("windows:", cv.segment_multi);
    out += detail::multiclass_block("walks:", cv.walk_multi);
    out += detail::confusion_grid(cv.walk_multi, false);
    out += detail::confusion_grid(cv.walk_multi, true);
  }
  std::snprintf(buf, sizeof(buf),
                "fold accuracy: windows %.1f%% +/- %.1f, walks %.1f%% +/- %.1f\n",
                cv.segment_acc.mean * 100.0, cv.segment_acc.sd * 100.0, cv.walk_acc.mean * 100.0,
                cv.walk_acc.sd * 100.0);
  out += buf;
  return out;
}

inline std::string format_ablation_report(const AblationResult& ab) {
  std::string out = "sensor pair ablation (window-level metrics)\n";
  char buf[256];
  const bool detection = ab.baseline.task == HeadKind::Detection;
  if (detection) {
    out += "  removed  Se      Sp      Acc     dAcc\n";
    const DetectionMetrics base = detection_metrics(ab.baseline.segment_bin);
    std::snprintf(buf, sizeof(buf), "  %-8s %-7s %-7s %-7s %s\n", "none",
                  detail::fmt_pct(base.sensitivity).c_str(),
                  detail::fmt_pct(base.specificity).c_str(),
                  detail::fmt_pct(base.accuracy).c_str(), "");
    out += buf;
    for (const AblationRow& row : ab.rows) {
      const DetectionMetrics m = detection_metrics(row.cv.segment_bin);
      const double delta = (m.accuracy.value_or(0.0) - base.accuracy.value_or(0.0)) * 100.0;
      std::snprintf(buf, sizeof(buf), "  %-8s %-7s %-7s %-7s %+.1f\n", row.pair.name.c_str(),
                    detail::fmt_pct(m.sensitivity).c_str(), detail::fmt_pct(m.specificity).c_str(),
                    detail::fmt_pct(m.accuracy).c_str(), delta);
      out += buf;
    }
  } else {
    out += "  removed  Acc     dAcc\n";
    const MulticlassMetrics base = multiclass_metrics(ab.baseline.segment_multi);
    std::snprintf(buf, sizeof(buf), "  %-8s %-7s\n", "none", detail::fmt_pct(base.accuracy).c_str());
    out += buf;
    for (const AblationRow& row : ab.rows) {
      const MulticlassMetrics m = multiclass_metrics(row.cv.segment_multi);
      const double delta = (m.accuracy.value_or(0.0) - base.accuracy.value_or(0.0)) * 100.0;
      std::snprintf(buf, sizeof(buf), "  %-8s %-7s %+.1f\n", row.pair.name.c_str(),
                    detail::fmt_pct(m.accuracy).c_str(), delta);
      out += buf;
    }
  }
  return out;
}

namespace detail {

inline std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw CorruptFile("cannot open " + path.string() + " for writing");
  return out;
}

}  // namespace detail

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  auto out = detail::open_out(path);
  out << text;
}

inline void write_metrics_csv(const std::filesystem::path& path, const CvResult& cv) {
  auto out = detail::open_out(path);
  if (cv.task == HeadKind::Detection) {
    out << "level,tp,fn,tn,fp,sensitivity,specificity,accuracy\n";
    for (const auto& [level, c] :
         {std::pair<const char*, const BinaryConfusion&>{"window", cv.segment_bin},
          {"walk", cv.walk_bin}}) {
      const DetectionMetrics m = detection_metrics(c);
      out << level << ',' << c.tp << ',' << c.fn << ',' << c.tn << ',' << c.fp << ','
          << detail::fmt_frac(m.sensitivity) << ',' << detail::fmt_frac(m.specificity) << ','
          << detail::fmt_frac(m.accuracy) << '\n';
    }
  } else {
    out << "level,class,precision,recall,f1,support\n";
    for (const auto& [level, c] :
         {std::pair<const char*, const MultiConfusion&>{"window", cv.segment_multi},
          {"walk", cv.walk_multi}}) {
      const MulticlassMetrics m = multiclass_metrics(c);
      for (int k = 0; k < kSeverityClasses; ++k) {
        const ClassMetrics& cm = m.per_class[static_cast<std::size_t>(k)];
        out << level << ',' << (k + 1) << ',' << detail::fmt_frac(cm.precision) << ','
            << detail::fmt_frac(cm.recall) << ',' << detail::fmt_frac(cm.f1) << ',' << cm.support
            << '\n';
      }
      out << level << ",weighted," << detail::fmt_frac(m.weighted_precision) << ','
          << detail::fmt_frac(m.weighted_recall) << ',' << detail::fmt_frac(m.weighted_f1) << ','
          << m.total << '\n';
      out << level << ",accuracy," << detail::fmt_frac(m.accuracy) << ",,," << m.total << '\n';
    }
  }
}

inline void write_walk_votes_csv(const std::filesystem::path& path,
                                 const std::vector<FoldResult>& folds) {
  auto out = detail::open_out(path);
  out << "fold,walk_id,truth,pred,windows\n";
  for (const FoldResult& fr : folds) {
    for (const WalkVote& v : fr.walk_votes) {
      out << fr.fold << ',' << v.walk_id << ',' << v.truth << ',' << v.pred << ',' << v.windows
          << '\n';
    }
  }
}

inline void write_ablation_csv(const std::filesystem::path& path, const AblationResult& ab) {
  auto out = detail::open_out(path);
  const bool detection = ab.baseline.task == HeadKind::Detection;
  out << "removed,level,sensitivity,specificity,accuracy\n";
  auto emit = [&](const std::string& name, const CvResult& cv) {
    if (detection) {
      const DetectionMetrics w = detection_metrics(cv.segment_bin);
      const DetectionMetrics s = detection_metrics(cv.walk_bin);
      out << name << ",window," << detail::fmt_frac(w.sensitivity) << ','
          << detail::fmt_frac(w.specificity) << ',' << detail::fmt_frac(w.accuracy) << '\n';
      out << name << ",walk," << detail::fmt_frac(s.sensitivity) << ','
          << detail::fmt_frac(s.specificity) << ',' << detail::fmt_frac(s.accuracy) << '\n';
    } else {
      const MulticlassMetrics w = multiclass_metrics(cv.segment_multi);
      const MulticlassMetrics s = multiclass_metrics(cv.walk_multi);
      out << name << ",window,,," << detail::fmt_frac(w.accuracy) << '\n';
      out << name << ",walk,,," << detail::fmt_frac(s.accuracy) << '\n';
    }
  };
  emit("none", ab.baseline);
  for (const AblationRow& row : ab.rows) emit(row.pair.name, row.cv);
}

}  // namespace pdgait
