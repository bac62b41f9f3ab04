// Ingestion of the PhysioNet gaitpdb database: walk files (19 whitespace
// columns: time, L1..L8, R1..R8, LTotal, RTotal at 100 Hz), a demographics
// manifest (subject_id group updrs_total) and an optional exclusion manifest
// (walk_id per line, '#' starts a comment).
#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "pdgait/channels.hpp"
#include "pdgait/errors.hpp"

namespace pdgait {

enum class Group { Control, Parkinson };

inline std::string to_string(Group g) {
  return g == Group::Control ? "control" : "parkinson";
}

inline constexpr int kSampleRateHz = 100;
inline constexpr int kUpdrsMax = 176;

// UPDRS total score -> severity class 1..5. Total and monotone on [0, 176].
inline int map_updrs_to_class(int updrs_total) {
  if (updrs_total < 0 || updrs_total > kUpdrsMax) {
    throw OutOfRange("UPDRS total " + std::to_string(updrs_total) +
                     " outside [0, " + std::to_string(kUpdrsMax) + "]");
  }
  if (updrs_total < 5) return 1;
  if (updrs_total < 15) return 2;
  if (updrs_total < 25) return 3;
  if (updrs_total < 35) return 4;
  return 5;
}

struct SubjectInfo {
  std::string id;
  Group group = Group::Control;
  std::optional<int> updrs_total;
};

// Severity label for a subject: controls without a score default to class 1;
// Parkinson subjects without a score stay unlabeled (excluded from severity
// experiments only).
inline std::optional<int> severity_class_of(const SubjectInfo& s) {
  if (s.updrs_total) return map_updrs_to_class(*s.updrs_total);
  if (s.group == Group::Control) return 1;
  return std::nullopt;
}

struct Walk {
  std::string walk_id;
  std::string subject_id;
  Group group = Group::Control;
  std::optional<int> updrs_total;
  Eigen::MatrixXd samples;  // num_timesteps x 18, canonical channel order
  int sample_rate_hz = kSampleRateHz;

  std::optional<int> severity_class() const {
    SubjectInfo s{subject_id, group, updrs_total};
    return severity_class_of(s);
  }
};

namespace detail {

inline void split_ws(std::string_view line, std::vector<std::string_view>& out) {
  out.clear();
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t') ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
}

inline bool parse_double(std::string_view tok, double& value) {
  const char* first = tok.data();
  const char* last = tok.data() + tok.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  return ec == std::errc() && ptr == last;
}

inline std::string_view strip_cr(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  return line;
}

// "GaCo01_01" -> "GaCo01". A stem without '_' is its own subject.
inline std::string subject_id_from_stem(const std::string& stem) {
  const auto pos = stem.rfind('_');
  return pos == std::string::npos ? stem : stem.substr(0, pos);
}

}  // namespace detail

// Demographics manifest. One subject per line: id, group (control|parkinson),
// UPDRS total as an integer or '-' when absent.
class SubjectRegistry {
 public:
  static SubjectRegistry parse_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open demographics manifest: " + path.string());
    SubjectRegistry reg;
    std::string line;
    std::vector<std::string_view> tok;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      std::string_view sv = detail::strip_cr(line);
      if (auto pos = sv.find('#'); pos != std::string_view::npos) sv = sv.substr(0, pos);
      detail::split_ws(sv, tok);
      if (tok.empty()) continue;
      const std::string where = path.string() + ":" + std::to_string(line_no);
      if (tok.size() != 3) {
        throw MalformedRow(where + ": expected 'subject_id group updrs', got " +
                           std::to_string(tok.size()) + " fields");
      }
      SubjectInfo info;
      info.id = std::string(tok[0]);
      std::string grp(tok[1]);
      std::transform(grp.begin(), grp.end(), grp.begin(),
                     [](unsigned char c) { return std::tolower(c); });
      if (grp == "control") {
        info.group = Group::Control;
      } else if (grp == "parkinson") {
        info.group = Group::Parkinson;
      } else {
        throw MalformedRow(where + ": unknown group '" + std::string(tok[1]) + "'");
      }
      if (tok[2] != "-") {
        int updrs = 0;
        auto [ptr, ec] = std::from_chars(tok[2].data(), tok[2].data() + tok[2].size(), updrs);
        if (ec != std::errc() || ptr != tok[2].data() + tok[2].size()) {
          throw MalformedRow(where + ": UPDRS must be an integer or '-'");
        }
        if (updrs < 0 || updrs > kUpdrsMax) {
          throw OutOfRange(where + ": UPDRS " + std::to_string(updrs) + " outside [0, 176]");
        }
        if (info.group == Group::Control && map_updrs_to_class(updrs) != 1) {
          throw ConfigError(where + ": control subject with UPDRS " + std::to_string(updrs) +
                            " would map to severity class > 1");
        }
        info.updrs_total = updrs;
      }
      if (!reg.subjects_.emplace(info.id, info).second) {
        throw ConfigError(where + ": duplicate subject '" + info.id + "'");
      }
    }
    if (reg.subjects_.empty()) throw ConfigError("demographics manifest is empty: " + path.string());
    return reg;
  }

  const SubjectInfo* find(const std::string& id) const {
    auto it = subjects_.find(id);
    return it == subjects_.end() ? nullptr : &it->second;
  }

  std::size_t size() const { return subjects_.size(); }

 private:
  std::map<std::string, SubjectInfo> subjects_;
};

// Lenient parse of the 19-column layout: validates shape, time monotonicity
// and non-negative finite forces, returns the T x 18 force matrix. Used
// directly by prediction on walks with no demographics entry.
inline Eigen::MatrixXd parse_walk_samples(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open walk file: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string content = ss.str();

  std::vector<std::array<double, 19>> rows;
  std::vector<std::string_view> tok;
  std::size_t pos = 0;
  int line_no = 0;
  while (pos < content.size()) {
    std::size_t eol = content.find('\n', pos);
    if (eol == std::string::npos) eol = content.size();
    std::string_view line = detail::strip_cr(
        std::string_view(content).substr(pos, eol - pos));
    pos = eol + 1;
    ++line_no;
    detail::split_ws(line, tok);
    if (tok.empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    if (tok.size() != 19) {
      throw MalformedRow(where + ": expected 19 columns, got " + std::to_string(tok.size()));
    }
    std::array<double, 19> row;
    for (std::size_t c = 0; c < 19; ++c) {
      if (!detail::parse_double(tok[c], row[c]) || !std::isfinite(row[c])) {
        throw MalformedRow(where + ": column " + std::to_string(c + 1) +
                           " is not a finite number ('" + std::string(tok[c]) + "')");
      }
    }
    for (std::size_t c = 1; c < 19; ++c) {
      if (row[c] < 0.0) {
        throw NegativeForce(where + ": negative force " + std::to_string(row[c]) +
                            " in column " + std::to_string(c + 1));
      }
    }
    if (!rows.empty()) {
      const double dt = row[0] - rows.back()[0];
      if (std::abs(dt - 0.01) > 1e-6) {
        throw NonMonotoneTime(where + ": time step " + std::to_string(dt) +
                              " s, expected 0.01 s");
      }
    }
    rows.push_back(row);
  }

  Eigen::MatrixXd samples(static_cast<Eigen::Index>(rows.size()), kNumChannels);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (int c = 0; c < kNumChannels; ++c) samples(static_cast<Eigen::Index>(r), c) = rows[r][c + 1];
  }
  return samples;
}

inline Walk parse_walk_file(const std::filesystem::path& path, const SubjectRegistry& registry) {
  Walk walk;
  walk.walk_id = path.stem().string();
  walk.subject_id = detail::subject_id_from_stem(walk.walk_id);
  const SubjectInfo* info = registry.find(walk.subject_id);
  if (!info) {
    throw UnknownSubject(path.string() + ": subject '" + walk.subject_id +
                         "' not in demographics manifest");
  }
  walk.group = info->group;
  walk.updrs_total = info->updrs_total;
  walk.samples = parse_walk_samples(path);
  return walk;
}

// Canonical layout writer. Forces are printed with 17 significant digits so a
// write/parse round trip is bit-identical; the time column is regenerated at
// 0.01 s steps.
inline void write_walk_file(const std::filesystem::path& path, const Eigen::MatrixXd& samples) {
  if (samples.cols() != kNumChannels) {
    throw ShapeMismatch("walk sample matrix must have 18 columns");
  }
  std::ofstream out(path);
  if (!out) throw Error("cannot open for writing: " + path.string());
  char buf[40];
  for (Eigen::Index r = 0; r < samples.rows(); ++r) {
    std::snprintf(buf, sizeof buf, "%.2f", 0.01 * static_cast<double>(r));
    out << buf;
    for (int c = 0; c < kNumChannels; ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", samples(r, c));
      out << '\t' << buf;
    }
    out << '\n';
  }
  if (!out) throw Error("write failed: " + path.string());
}

// Exclusion manifest: one walk_id per line, optional '# reason' comment.
class ExclusionList {
 public:
  ExclusionList() = default;

  static ExclusionList parse_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open exclusion manifest: " + path.string());
    ExclusionList list;
    std::string line;
    while (std::getline(in, line)) {
      std::string_view sv = detail::strip_cr(line);
      std::string reason = "excluded by manifest";
      if (auto pos = sv.find('#'); pos != std::string_view::npos) {
        std::string_view r = sv.substr(pos + 1);
        sv = sv.substr(0, pos);
        while (!r.empty() && r.front() == ' ') r.remove_prefix(1);
        if (!r.empty()) reason = std::string(r);
      }
      std::vector<std::string_view> tok;
      detail::split_ws(sv, tok);
      if (tok.empty()) continue;
      list.reasons_[std::string(tok[0])] = reason;
    }
    return list;
  }

  const std::string* reason_for(const std::string& walk_id) const {
    auto it = reasons_.find(walk_id);
    return it == reasons_.end() ? nullptr : &it->second;
  }

  std::size_t size() const { return reasons_.size(); }

 private:
  std::map<std::string, std::string> reasons_;
};

struct LoadNote {
  std::string walk_id;
  std::string reason;
};

struct Dataset {
  std::vector<Walk> walks;
  std::vector<SubjectInfo> subjects;  // subjects owning >= 1 loaded walk, sorted by id
  std::vector<LoadNote> excluded;     // manifest exclusions applied at load time

  int subject_count(Group g) const {
    return static_cast<int>(std::count_if(subjects.begin(), subjects.end(),
                                          [&](const SubjectInfo& s) { return s.group == g; }));
  }
  int walk_count(Group g) const {
    return static_cast<int>(std::count_if(walks.begin(), walks.end(),
                                          [&](const Walk& w) { return w.group == g; }));
  }
  const SubjectInfo* subject(const std::string& id) const {
    auto it = std::lower_bound(subjects.begin(), subjects.end(), id,
                               [](const SubjectInfo& s, const std::string& v) { return s.id < v; });
    return (it != subjects.end() && it->id == id) ? &*it : nullptr;
  }
};

inline Dataset load_dataset(const std::filesystem::path& root,
                            const std::filesystem::path& manifest,
                            const std::filesystem::path* exclusions = nullptr) {
  namespace fs = std::filesystem;
  const SubjectRegistry registry = SubjectRegistry::parse_file(manifest);
  ExclusionList excl;
  if (exclusions) excl = ExclusionList::parse_file(*exclusions);

  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".txt") continue;
    if (fs::equivalent(entry.path(), manifest)) continue;
    if (exclusions && fs::exists(*exclusions) && fs::equivalent(entry.path(), *exclusions)) continue;
    files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());

  Dataset ds;
  std::map<std::string, SubjectInfo> used_subjects;
  for (const auto& file : files) {
    const std::string walk_id = file.stem().string();
    if (const std::string* reason = excl.reason_for(walk_id)) {
      ds.excluded.push_back({walk_id, *reason});
      continue;
    }
    Walk walk = parse_walk_file(file, registry);
    for (const Walk& existing : ds.walks) {
      if (existing.walk_id == walk.walk_id) {
        throw Error(file.string() + ": duplicate walk_id '" + walk.walk_id + "'");
      }
    }
    used_subjects.emplace(walk.subject_id,
                          SubjectInfo{walk.subject_id, walk.group, walk.updrs_total});
    ds.walks.push_back(std::move(walk));
  }
  if (ds.walks.empty()) {
    throw EmptyDataset("no walk files found under " + root.string());
  }
  ds.subjects.reserve(used_subjects.size());
  for (auto& [id, info] : used_subjects) ds.subjects.push_back(info);
  return ds;
}

}  // namespace pdgait
