#pragma once

#include <span>
#include <vector>

namespace eeb {

// Irregularly sampled (breath-by-breath) values with strictly increasing timestamps.
struct BreathSeries {
  std::vector<double> t_sec;
  std::vector<double> values;
};

// Aggregates breath samples inside [start_sec, end_sec) to a uniform rate. Each output
// interval holds the mean of the breaths falling in it; an empty interval carries the
// previous value forward (or takes the first in-segment breath if it leads the segment).
// Throws ProtocolError when no breath falls inside the segment.
std::vector<double> resample_breath_signals(std::span<const double> t_sec,
                                            std::span<const double> values, double start_sec,
                                            double end_sec, double target_rate_hz);

inline std::vector<double> resample_breath_signals(const BreathSeries& series, double start_sec,
                                                   double end_sec, double target_rate_hz) {
  return resample_breath_signals(series.t_sec, series.values, start_sec, end_sec,
                                 target_rate_hz);
}

// Number of uniform samples produced for a segment.
std::size_t resampled_length(double start_sec, double end_sec, double target_rate_hz);

}  // namespace eeb
