#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace eeb {

enum class Activity : std::uint8_t { sit, stand, walk, incline, backward, run, cycle, stairs };

std::string_view activity_name(Activity a);
std::optional<Activity> find_activity(std::string_view name);

[[nodiscard]] constexpr bool is_rest(Activity a) noexcept {
  return a == Activity::sit || a == Activity::stand;
}

// Condition label used for sit/stand segments.
inline constexpr std::string_view kRestCondition = "rest";

// Closed set of speed / incline / resistance / power conditions for an activity.
std::span<const std::string_view> conditions_for(Activity a);

bool is_valid_condition(Activity a, std::string_view condition);

// Session in which the activity is recorded (treadmill block = 1, mixed block = 2).
int session_of(Activity a);

// All (activity, condition) pairs of the exercise protocol, rest excluded, in table order.
struct ConditionKey {
  Activity activity;
  std::string condition;

  friend bool operator==(const ConditionKey&, const ConditionKey&) = default;
  friend auto operator<=>(const ConditionKey&, const ConditionKey&) = default;
};

std::vector<ConditionKey> exercise_conditions();

struct ActivitySegment {
  Activity activity = Activity::stand;
  std::string condition{kRestCondition};
  std::size_t start_index = 0;  // inclusive sample index
  std::size_t end_index = 0;    // exclusive sample index
  int session = 1;
  int trial = 0;  // index of the stand-led trial the segment belongs to

  [[nodiscard]] std::size_t length() const noexcept { return end_index - start_index; }
};

// Throws ProtocolError unless segments are non-empty, ordered and non-overlapping
// and their conditions belong to the closed set.
void validate_segments(std::span<const ActivitySegment> segments);

}  // namespace eeb
