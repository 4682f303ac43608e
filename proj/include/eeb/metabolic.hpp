#pragma once

#include <span>

#include "eeb/activity.hpp"

namespace eeb {

// Respiratory-only Brockway coefficients, kJ per litre.
inline constexpr double kBrockwayO2 = 16.58;
inline constexpr double kBrockwayCO2 = 4.51;

// Steady state is taken over the last three minutes of a condition.
inline constexpr double kSteadyStateSeconds = 180.0;

// Metabolic power in watts from gas exchange rates in L/min.
double compute_brockway_power(double vo2_lpm, double vco2_lpm);

double normalize_by_mass(double power_w, double mass_kg);

// Mean of `ee_series` over the final 180 s of `segment`.
double steady_state_ee(const ActivitySegment& segment, std::span<const double> ee_series,
                       double sample_rate_hz);

// Net cost is not clamped; negative values are kept.
[[nodiscard]] constexpr double net_cost(double steady, double standing_baseline) noexcept {
  return steady - standing_baseline;
}

}  // namespace eeb
