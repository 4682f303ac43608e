#include "eeb/metabolic.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "eeb/errors.hpp"

namespace eeb {

double compute_brockway_power(double vo2_lpm, double vco2_lpm) {
  if (!(vo2_lpm >= 0.0) || !(vco2_lpm >= 0.0)) {
    throw DomainError("gas exchange rates must be non-negative (vo2=" + std::to_string(vo2_lpm) +
                      ", vco2=" + std::to_string(vco2_lpm) + ")");
  }
  // kJ/min -> W
  return (kBrockwayO2 * vo2_lpm + kBrockwayCO2 * vco2_lpm) * 1000.0 / 60.0;
}

double normalize_by_mass(double power_w, double mass_kg) {
  if (!(mass_kg > 0.0)) throw DomainError("body mass must be positive");
  return power_w / mass_kg;
}

double steady_state_ee(const ActivitySegment& segment, std::span<const double> ee_series,
                       double sample_rate_hz) {
  if (!(sample_rate_hz > 0.0)) throw DomainError("sample rate must be positive");
  const auto window = static_cast<std::size_t>(std::llround(kSteadyStateSeconds * sample_rate_hz));
  if (segment.end_index > ee_series.size()) {
    throw ProtocolError("segment extends past the end of the EE series");
  }
  if (segment.length() < window) {
    throw ProtocolError("segment '" + segment.condition + "' spans " +
                        std::to_string(segment.length()) + " samples; steady state needs " +
                        std::to_string(window));
  }
  auto tail = ee_series.subspan(segment.end_index - window, window);
  return std::accumulate(tail.begin(), tail.end(), 0.0) / static_cast<double>(window);
}

}  // namespace eeb
