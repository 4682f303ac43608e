#include "eeb/activity.hpp"

#include <algorithm>
#include <array>

#include "eeb/errors.hpp"

namespace eeb {
namespace {

using namespace std::string_view_literals;

constexpr std::array kRest{kRestCondition};
constexpr std::array kWalk{"0.6m/s"sv, "0.9m/s"sv, "1.2m/s"sv};
constexpr std::array kIncline{"0.6m/s@4deg"sv, "1.2m/s@4deg"sv, "0.6m/s@9deg"sv, "1.2m/s@9deg"sv};
constexpr std::array kBackward{"0.4m/s"sv, "0.7m/s"sv, "1.0m/s"sv};
constexpr std::array kRun{"1.2m/s"sv, "1.8m/s"sv, "2.2m/s"sv, "2.7m/s"sv};
constexpr std::array kCycle{"70rpm-R1"sv, "70rpm-R3"sv, "70rpm-R5"sv, "100rpm-R1"sv};
constexpr std::array kStairs{"60W"sv, "75W"sv, "90W"sv};

constexpr std::array kNames{"sit"sv,      "stand"sv, "walk"sv,  "incline"sv,
                            "backward"sv, "run"sv,   "cycle"sv, "stairs"sv};

}  // namespace

std::string_view activity_name(Activity a) { return kNames[static_cast<std::size_t>(a)]; }

std::optional<Activity> find_activity(std::string_view name) {
  for (std::size_t i = 0; i < kNames.size(); ++i) {
    if (kNames[i] == name) return static_cast<Activity>(i);
  }
  return std::nullopt;
}

std::span<const std::string_view> conditions_for(Activity a) {
  switch (a) {
    case Activity::sit:
    case Activity::stand: return kRest;
    case Activity::walk: return kWalk;
    case Activity::incline: return kIncline;
    case Activity::backward: return kBackward;
    case Activity::run: return kRun;
    case Activity::cycle: return kCycle;
    case Activity::stairs: return kStairs;
  }
  return {};
}

bool is_valid_condition(Activity a, std::string_view condition) {
  auto set = conditions_for(a);
  return std::find(set.begin(), set.end(), condition) != set.end();
}

int session_of(Activity a) {
  switch (a) {
    case Activity::run:
    case Activity::cycle:
    case Activity::stairs: return 2;
    default: return 1;
  }
}

std::vector<ConditionKey> exercise_conditions() {
  std::vector<ConditionKey> out;
  for (auto a : {Activity::walk, Activity::incline, Activity::backward, Activity::run,
                 Activity::cycle, Activity::stairs}) {
    for (auto c : conditions_for(a)) out.push_back({a, std::string(c)});
  }
  return out;
}

void validate_segments(std::span<const ActivitySegment> segments) {
  std::size_t prev_end = 0;
  for (std::size_t i = 0; i < segments.size(); ++i) {
    const auto& s = segments[i];
    if (s.start_index >= s.end_index) {
      throw ProtocolError("segment " + std::to_string(i) + " is empty or reversed");
    }
    if (i > 0 && s.start_index < prev_end) {
      throw ProtocolError("segment " + std::to_string(i) + " overlaps its predecessor");
    }
    if (!is_valid_condition(s.activity, s.condition)) {
      throw ProtocolError("condition '" + s.condition + "' is not defined for activity '" +
                          std::string(activity_name(s.activity)) + "'");
    }
    prev_end = s.end_index;
  }
}

}  // namespace eeb
