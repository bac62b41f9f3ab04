// The 18 VGRF channels of a gaitpdb walk file, in canonical column order:
// L1..L8, R1..R8, LTotal, RTotal.
#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace pdgait {

enum class Channel : int {
  L1 = 0, L2, L3, L4, L5, L6, L7, L8,
  R1, R2, R3, R4, R5, R6, R7, R8,
  LTotal, RTotal,
};

inline constexpr int kNumChannels = 18;

inline constexpr std::array<Channel, kNumChannels> kAllChannels = {
    Channel::L1, Channel::L2, Channel::L3, Channel::L4,
    Channel::L5, Channel::L6, Channel::L7, Channel::L8,
    Channel::R1, Channel::R2, Channel::R3, Channel::R4,
    Channel::R5, Channel::R6, Channel::R7, Channel::R8,
    Channel::LTotal, Channel::RTotal,
};

inline bool is_total(Channel c) {
  return c == Channel::LTotal || c == Channel::RTotal;
}

// Symmetric left/right partner: pair(Li) = Ri, pair(LTotal) = RTotal.
inline Channel paired(Channel c) {
  const int i = static_cast<int>(c);
  if (i < 8) return static_cast<Channel>(i + 8);
  if (i < 16) return static_cast<Channel>(i - 8);
  return c == Channel::LTotal ? Channel::RTotal : Channel::LTotal;
}

inline std::string to_string(Channel c) {
  static const std::array<const char*, kNumChannels> names = {
      "L1", "L2", "L3", "L4", "L5", "L6", "L7", "L8",
      "R1", "R2", "R3", "R4", "R5", "R6", "R7", "R8",
      "LTotal", "RTotal"};
  return names[static_cast<int>(c)];
}

inline std::optional<Channel> channel_from_string(std::string_view s) {
  for (Channel c : kAllChannels) {
    if (to_string(c) == s) return c;
  }
  return std::nullopt;
}

// The 9 symmetric sensor pairs used by the ablation study. "Total" covers
// LTotal/RTotal, "L1R1".."L8R8" the per-sensor pairs.
struct SensorPair {
  Channel left;
  Channel right;
  std::string name;
};

inline std::vector<SensorPair> all_sensor_pairs() {
  std::vector<SensorPair> pairs;
  for (int i = 0; i < 8; ++i) {
    const Channel l = static_cast<Channel>(i);
    pairs.push_back({l, paired(l), to_string(l) + to_string(paired(l))});
  }
  pairs.push_back({Channel::LTotal, Channel::RTotal, "Total"});
  return pairs;
}

inline std::optional<SensorPair> sensor_pair_from_string(std::string_view s) {
  for (const auto& p : all_sensor_pairs()) {
    if (p.name == s) return p;
  }
  return std::nullopt;
}

}  // namespace pdgait
