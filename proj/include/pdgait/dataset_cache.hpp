// Validated-dataset cache written by ingest and consumed by cv/ablate, so
// repeated runs skip the text parse. Binary layout mirrors the checkpoint
// conventions: magic "PDGAITDS", u32 version, subject table, then each walk's
// sample matrix as raw little-endian doubles (column-major).
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "pdgait/errors.hpp"
#include "pdgait/io.hpp"
#include "pdgait/vgrf_data.hpp"

namespace pdgait {

inline constexpr char kDatasetCacheMagic[8] = {'P', 'D', 'G', 'A', 'I', 'T', 'D', 'S'};
inline constexpr std::uint32_t kDatasetCacheVersion = 1;

inline void save_dataset_cache(const std::filesystem::path& path, const Dataset& ds) {
  detail::ByteWriter w;
  w.raw(kDatasetCacheMagic, sizeof(kDatasetCacheMagic));
  w.u32(kDatasetCacheVersion);
  w.u32(static_cast<std::uint32_t>(ds.subjects.size()));
  for (const SubjectInfo& s : ds.subjects) {
    w.str(s.id);
    w.u8(s.group == Group::Parkinson ? 1 : 0);
    w.u8(s.updrs_total ? 1 : 0);
    if (s.updrs_total) w.u32(static_cast<std::uint32_t>(*s.updrs_total));
  }
  w.u32(static_cast<std::uint32_t>(ds.walks.size()));
  for (const Walk& walk : ds.walks) {
    w.str(walk.walk_id);
    w.str(walk.subject_id);
    w.u8(walk.group == Group::Parkinson ? 1 : 0);
    w.u8(walk.updrs_total ? 1 : 0);
    if (walk.updrs_total) w.u32(static_cast<std::uint32_t>(*walk.updrs_total));
    w.u32(static_cast<std::uint32_t>(walk.sample_rate_hz));
    w.u64(static_cast<std::uint64_t>(walk.samples.rows()));
    w.raw(walk.samples.data(), static_cast<std::size_t>(walk.samples.size()) * sizeof(double));
  }
  w.u32(static_cast<std::uint32_t>(ds.excluded.size()));
  for (const LoadNote& note : ds.excluded) {
    w.str(note.walk_id);
    w.str(note.reason);
  }
  detail::spill_binary(path, w.buf);
}

// Stable content hash over subjects and raw samples, for run manifests.
inline std::uint64_t dataset_checksum(const Dataset& ds) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const SubjectInfo& s : ds.subjects) {
    h = detail::fnv1a(s.id.data(), s.id.size(), h);
    const int g = s.group == Group::Parkinson ? 1 : 0;
    h = detail::fnv1a(&g, sizeof(g), h);
    const int u = s.updrs_total.value_or(-1);
    h = detail::fnv1a(&u, sizeof(u), h);
  }
  for (const Walk& walk : ds.walks) {
    h = detail::fnv1a(walk.walk_id.data(), walk.walk_id.size(), h);
    h = detail::fnv1a(walk.samples.data(),
                      static_cast<std::size_t>(walk.samples.size()) * sizeof(double), h);
  }
  return h;
}

inline Dataset load_dataset_cache(const std::filesystem::path& path) {
  const std::string buf = detail::slurp_binary(path);
  detail::ByteReader r{buf};
  char magic[8];
  r.raw(magic, sizeof(magic));
  if (std::memcmp(magic, kDatasetCacheMagic, sizeof(magic)) != 0) {
    throw CorruptFile(path.string() + ": not a dataset cache");
  }
  const std::uint32_t version = r.u32();
  if (version != kDatasetCacheVersion) {
    throw VersionMismatch(path.string() + ": dataset cache version " + std::to_string(version));
  }
  Dataset ds;
  const std::uint32_t n_subjects = r.u32();
  ds.subjects.reserve(n_subjects);
  for (std::uint32_t i = 0; i < n_subjects; ++i) {
    SubjectInfo s;
    s.id = r.str();
    s.group = r.u8() ? Group::Parkinson : Group::Control;
    if (r.u8()) s.updrs_total = static_cast<int>(r.u32());
    ds.subjects.push_back(std::move(s));
  }
  const std::uint32_t n_walks = r.u32();
  ds.walks.reserve(n_walks);
  for (std::uint32_t i = 0; i < n_walks; ++i) {
    Walk walk;
    walk.walk_id = r.str();
    walk.subject_id = r.str();
    walk.group = r.u8() ? Group::Parkinson : Group::Control;
    if (r.u8()) walk.updrs_total = static_cast<int>(r.u32());
    walk.sample_rate_hz = static_cast<int>(r.u32());
    const auto rows = static_cast<Eigen::Index>(r.u64());
    walk.samples.resize(rows, kNumChannels);
    r.raw(walk.samples.data(), static_cast<std::size_t>(walk.samples.size()) * sizeof(double));
    ds.walks.push_back(std::move(walk));
  }
  const std::uint32_t n_notes = r.u32();
  ds.excluded.reserve(n_notes);
  for (std::uint32_t i = 0; i < n_notes; ++i) {
    LoadNote note;
    note.walk_id = r.str();
    note.reason = r.str();
    ds.excluded.push_back(std::move(note));
  }
  if (!r.done()) throw CorruptFile(path.string() + ": trailing bytes");
  if (ds.walks.empty()) throw EmptyDataset(path.string() + ": cache holds no walks");
  return ds;
}

}  // namespace pdgait
