// Binary checkpoint format for trained networks. Layout (little endian):
//   magic "PDGAITCK", u32 version,
//   u8 head kind, u32 window_len, u32 stride, u8 normalized,
//   3 x f64 dropout rates, u32 n_channels, n_channels x u8 channel ids,
//   [normalized] n_channels x f64 means, n_channels x f64 stds,
//   u32 tensor count, per tensor {u16 name_len, name, u8 rank, rank x u64 dims},
//   then every tensor's doubles in manifest order.
#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "pdgait/errors.hpp"
#include "pdgait/io.hpp"
#include "pdgait/model.hpp"
#include "pdgait/windowing.hpp"

namespace pdgait {

inline constexpr char kCheckpointMagic[8] = {'P', 'D', 'G', 'A', 'I', 'T', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

// Everything predict needs besides the weights: how windows were cut and
// how they were scaled at training time.
struct CheckpointMeta {
  int stride = kDefaultStride;
  bool normalized = false;
  std::vector<double> norm_mean;  // per active channel, config order
  std::vector<double> norm_std;
};

inline void save_checkpoint(const std::filesystem::path& path, Network& net,
                            const CheckpointMeta& meta) {
  const ModelConfig& cfg = net.config();
  if (meta.normalized && (meta.norm_mean.size() != cfg.channels.size() ||
                          meta.norm_std.size() != cfg.channels.size())) {
    throw ShapeMismatch("normalization stats do not cover the active channels");
  }
  detail::ByteWriter w;
  w.raw(kCheckpointMagic, sizeof(kCheckpointMagic));
  w.u32(kCheckpointVersion);
  w.u8(static_cast<std::uint8_t>(cfg.head));
  w.u32(static_cast<std::uint32_t>(cfg.window_len));
  w.u32(static_cast<std::uint32_t>(meta.stride));
  w.u8(meta.normalized ? 1 : 0);
  w.f64(cfg.branch_dropout);
  w.f64(cfg.concat_dropout);
  w.f64(cfg.head_dropout);
  w.u32(static_cast<std::uint32_t>(cfg.channels.size()));
  for (Channel c : cfg.channels) w.u8(static_cast<std::uint8_t>(c));
  if (meta.normalized) {
    for (double v : meta.norm_mean) w.f64(v);
    for (double v : meta.norm_std) w.f64(v);
  }
  const auto named = net.named_parameters();
  w.u32(static_cast<std::uint32_t>(named.size()));
  for (const auto& [name, t] : named) {
    w.u16(static_cast<std::uint16_t>(name.size()));
    w.raw(name.data(), name.size());
    w.u8(static_cast<std::uint8_t>(t->shape.size()));
    for (Eigen::Index d : t->shape) w.u64(static_cast<std::uint64_t>(d));
  }
  for (const auto& [name, t] : named) {
    w.raw(t->data.data(), static_cast<std::size_t>(t->data.size()) * sizeof(double));
  }
  detail::spill_binary(path, w.buf);
}

namespace detail {

struct CheckpointHeader {
  ModelConfig config;
  CheckpointMeta meta;
  std::vector<std::pair<std::string, std::vector<Eigen::Index>>> manifest;
};

inline CheckpointHeader parse_checkpoint_header(ByteReader& r) {
  char magic[8];
  r.raw(magic, sizeof(magic));
  if (std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
    throw CorruptFile("not a checkpoint file");
  }
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw VersionMismatch("checkpoint version " + std::to_string(version) +
                          ", expected " + std::to_string(kCheckpointVersion));
  }
  CheckpointHeader h;
  const std::uint8_t head = r.u8();
  if (head > 1) throw CorruptFile("unknown head kind");
  h.config.head = static_cast<HeadKind>(head);
  h.config.window_len = static_cast<int>(r.u32());
  h.meta.stride = static_cast<int>(r.u32());
  h.meta.normalized = r.u8() != 0;
  h.config.branch_dropout = r.f64();
  h.config.concat_dropout = r.f64();
  h.config.head_dropout = r.f64();
  const std::uint32_t n_ch = r.u32();
  if (n_ch == 0 || n_ch > kNumChannels) throw CorruptFile("bad channel count");
  h.config.channels.clear();
  for (std::uint32_t i = 0; i < n_ch; ++i) {
    const std::uint8_t c = r.u8();
    if (c >= kNumChannels) throw CorruptFile("bad channel id");
    h.config.channels.push_back(static_cast<Channel>(c));
  }
  if (h.meta.normalized) {
    h.meta.norm_mean.resize(n_ch);
    h.meta.norm_std.resize(n_ch);
    for (auto& v : h.meta.norm_mean) v = r.f64();
    for (auto& v : h.meta.norm_std) v = r.f64();
  }
  const std::uint32_t n_tensors = r.u32();
  h.manifest.reserve(n_tensors);
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    const std::uint16_t name_len = r.u16();
    std::string name(name_len, '\0');
    r.raw(name.data(), name_len);
    const std::uint8_t rank = r.u8();
    std::vector<Eigen::Index> dims(rank);
    for (auto& d : dims) d = static_cast<Eigen::Index>(r.u64());
    h.manifest.emplace_back(std::move(name), std::move(dims));
  }
  return h;
}

inline void read_params_into(Network& net, const CheckpointHeader& h, ByteReader& r,
                             const std::string& where) {
  auto named = net.named_parameters();
  if (named.size() != h.manifest.size()) {
    throw ManifestMismatch(where + ": checkpoint holds " + std::to_string(h.manifest.size()) +
                           " tensors, network has " + std::to_string(named.size()));
  }
  for (std::size_t i = 0; i < named.size(); ++i) {
    const auto& [name, dims] = h.manifest[i];
    if (name != named[i].first || dims != named[i].second->shape) {
      throw ManifestMismatch(where + ": tensor " + std::to_string(i) + " is " + name +
                             ", expected " + named[i].first);
    }
  }
  for (auto& [name, t] : named) {
    r.raw(t->data.data(), static_cast<std::size_t>(t->data.size()) * sizeof(double));
  }
  if (!r.done()) throw CorruptFile(where + ": trailing bytes after tensor data");
}

}  // namespace detail

inline std::pair<Network, CheckpointMeta> load_checkpoint(const std::filesystem::path& path) {
  const std::string buf = detail::slurp_binary(path);
  detail::ByteReader r{buf};
  const detail::CheckpointHeader h = detail::parse_checkpoint_header(r);
  Network net{h.config};
  detail::read_params_into(net, h, r, path.filename().string());
  return {std::move(net), h.meta};
}

// Loads weights into an already constructed network; the checkpoint must
// describe the same architecture.
inline CheckpointMeta load_checkpoint_into(Network& net, const std::filesystem::path& path) {
  const std::string buf = detail::slurp_binary(path);
  detail::ByteReader r{buf};
  const detail::CheckpointHeader h = detail::parse_checkpoint_header(r);
  if (!Network::same_config(net.config(), h.config)) {
    throw ManifestMismatch(path.filename().string() + ": checkpoint architecture differs");
  }
  detail::read_params_into(net, h, r, path.filename().string());
  return h.meta;
}

}  // namespace pdgait
