#include "eeb/channels.hpp"

#include <algorithm>
#include <set>

#include "eeb/errors.hpp"

namespace eeb {
namespace {

constexpr std::array<SignalChannel, kNumChannels> kCatalog{{
    {ChannelId::waist_acc, "waist_acc", "Waist_ACCL", "g", true, false, true},
    {ChannelId::chest_acc, "chest_acc", "Chest_ACCL", "g", true, false, true},
    {ChannelId::left_ankle_acc, "left_ankle_acc", "L_Ankle_ACCL", "g", true, false, false},
    {ChannelId::right_ankle_acc, "right_ankle_acc", "R_Ankle_ACCL", "g", true, false, false},
    {ChannelId::left_wrist_acc, "left_wrist_acc", "L_Wrist_ACCL", "g", true, false, false},
    {ChannelId::left_wrist_eda, "left_wrist_eda", "L_Wrist_Elec", "uS", false, true, false},
    {ChannelId::left_wrist_temp, "left_wrist_temp", "L_Wrist_Temp", "degC", false, true, false},
    {ChannelId::right_wrist_acc, "right_wrist_acc", "R_Wrist_ACCL", "g", true, false, false},
    {ChannelId::right_wrist_eda, "right_wrist_eda", "R_Wrist_Elec", "uS", false, true, false},
    {ChannelId::right_wrist_temp, "right_wrist_temp", "R_Wrist_Temp", "degC", false, true, false},
    {ChannelId::emg_left, "emg_left", "EMG_M_L", "a.u.", true, false, false},
    {ChannelId::emg_right, "emg_right", "EMG_M_R", "a.u.", true, false, false},
    {ChannelId::heart_rate, "heart_rate", "HR", "bpm", false, true, true},
    {ChannelId::spo2, "spo2", "SpO2", "%", false, true, false},
    {ChannelId::breath_frequency, "breath_frequency", "Breath_Freq", "1/min", false, true, true},
    {ChannelId::minute_ventilation, "minute_ventilation", "Min_Vent", "L/min", false, true, true},
}};

std::optional<ChannelGroup> find_group(std::string_view name) {
  if (name == "local") return ChannelGroup::local;
  if (name == "global") return ChannelGroup::global;
  if (name == "hexoskin") return ChannelGroup::hexoskin;
  return std::nullopt;
}

// Expands a group-ish token ("local", "all", "local+global") into channels.
std::optional<std::vector<ChannelId>> expand_group_token(std::string_view token) {
  if (token == "all" || token == "local+global") return all_channels();
  if (auto g = find_group(token)) return group_members(*g);
  return std::nullopt;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

}  // namespace

const std::array<SignalChannel, kNumChannels>& channel_catalog() { return kCatalog; }

const SignalChannel& channel_info(ChannelId id) {
  return kCatalog[static_cast<std::size_t>(id)];
}

std::optional<ChannelId> find_channel(std::string_view name) {
  for (const auto& c : kCatalog) {
    if (c.name == name || c.label == name) return c.id;
  }
  return std::nullopt;
}

std::vector<ChannelId> group_members(ChannelGroup g) {
  std::vector<ChannelId> out;
  for (const auto& c : kCatalog) {
    if (c.in_group(g)) out.push_back(c.id);
  }
  return out;
}

std::string_view group_name(ChannelGroup g) {
  switch (g) {
    case ChannelGroup::local: return "local";
    case ChannelGroup::global: return "global";
    case ChannelGroup::hexoskin: return "hexoskin";
  }
  return "?";
}

std::vector<ChannelId> all_channels() {
  std::vector<ChannelId> out;
  for (const auto& c : kCatalog) out.push_back(c.id);
  return out;
}

std::vector<std::string> SignalSelection::channel_names() const {
  std::vector<std::string> out;
  for (auto id : channels) out.emplace_back(channel_info(id).name);
  return out;
}

SignalSelection make_selection(std::vector<ChannelId> channels, std::string label) {
  std::sort(channels.begin(), channels.end());
  channels.erase(std::unique(channels.begin(), channels.end()), channels.end());
  if (channels.empty()) throw SelectionError("empty signal selection");
  if (label.empty()) {
    for (std::size_t i = 0; i < channels.size(); ++i) {
      if (i) label += '+';
      label += channel_info(channels[i]).name;
    }
  }
  return SignalSelection{std::move(label), std::move(channels)};
}

SignalSelection parse_selection(std::string_view expr) {
  std::set<ChannelId> chosen;
  std::string_view rest = expr;
  while (true) {
    auto comma = rest.find(',');
    auto token = trim(rest.substr(0, comma));
    if (token.empty()) throw SelectionError("empty token in selection '" + std::string(expr) + "'");

    if (auto ch = find_channel(token)) {
      chosen.insert(*ch);
    } else if (auto members = expand_group_token(token)) {
      chosen.insert(members->begin(), members->end());
    } else if (auto dash = token.find('-'); dash != std::string_view::npos) {
      auto group_tok = token.substr(0, dash);
      auto minus_tok = token.substr(dash + 1);
      auto members = expand_group_token(group_tok);
      auto removed = find_channel(minus_tok);
      if (!members) throw SelectionError("unknown signal group '" + std::string(group_tok) + "'");
      if (!removed) throw SelectionError("unknown channel '" + std::string(minus_tok) + "'");
      if (std::find(members->begin(), members->end(), *removed) == members->end()) {
        throw SelectionError("channel '" + std::string(minus_tok) + "' is not a member of '" +
                             std::string(group_tok) + "'");
      }
      for (auto id : *members) {
        if (id != *removed) chosen.insert(id);
      }
    } else {
      throw SelectionError("unknown channel or group '" + std::string(token) + "'");
    }

    if (comma == std::string_view::npos) break;
    rest.remove_prefix(comma + 1);
  }
  return make_selection({chosen.begin(), chosen.end()}, std::string(trim(expr)));
}

}  // namespace eeb
