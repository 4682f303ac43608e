#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace eeb {

// The sixteen wearable input channels, in canonical table order.
enum class ChannelId : std::uint8_t {
  waist_acc,
  chest_acc,
  left_ankle_acc,
  right_ankle_acc,
  left_wrist_acc,
  left_wrist_eda,
  left_wrist_temp,
  right_wrist_acc,
  right_wrist_eda,
  right_wrist_temp,
  emg_left,
  emg_right,
  heart_rate,
  spo2,
  breath_frequency,
  minute_ventilation,
};

inline constexpr std::size_t kNumChannels = 16;

enum class ChannelGroup : std::uint8_t { local, global, hexoskin };

struct SignalChannel {
  ChannelId id;
  std::string_view name;   // canonical identifier, also the CSV column header
  std::string_view label;  // short display label used in report tables
  std::string_view unit;
  bool local;
  bool global;
  bool hexoskin;

  [[nodiscard]] bool in_group(ChannelGroup g) const noexcept {
    switch (g) {
      case ChannelGroup::local: return local;
      case ChannelGroup::global: return global;
      case ChannelGroup::hexoskin: return hexoskin;
    }
    return false;
  }
};

const std::array<SignalChannel, kNumChannels>& channel_catalog();

const SignalChannel& channel_info(ChannelId id);

std::optional<ChannelId> find_channel(std::string_view name);

std::vector<ChannelId> group_members(ChannelGroup g);

std::string_view group_name(ChannelGroup g);

std::vector<ChannelId> all_channels();

// A resolved signal selection: members are always in canonical order.
struct SignalSelection {
  std::string label;
  std::vector<ChannelId> channels;

  [[nodiscard]] std::vector<std::string> channel_names() const;
};

// Parses a selection expression. Accepted tokens, joined by ',':
//   <channel>                 e.g. minute_ventilation
//   <group>                   local | global | hexoskin | all | local+global
//   <group>-<channel>         group minus one channel, e.g. global-minute_ventilation
// Throws SelectionError for unknown names or an empty result.
SignalSelection parse_selection(std::string_view expr);

// Builds a selection from an explicit channel set; output is canonically ordered.
SignalSelection make_selection(std::vector<ChannelId> channels, std::string label = {});

}  // namespace eeb
