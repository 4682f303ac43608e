#include "eeb/resample.hpp"

#include <cmath>

#include "eeb/errors.hpp"

namespace eeb {

std::size_t resampled_length(double start_sec, double end_sec, double target_rate_hz) {
  if (!(target_rate_hz > 0.0)) throw DomainError("target rate must be positive");
  if (!(end_sec > start_sec)) throw ProtocolError("segment has non-positive duration");
  return static_cast<std::size_t>(std::llround((end_sec - start_sec) * target_rate_hz));
}

std::vector<double> resample_breath_signals(std::span<const double> t_sec,
                                            std::span<const double> values, double start_sec,
                                            double end_sec, double target_rate_hz) {
  if (t_sec.size() != values.size()) throw ContractError("timestamp/value length mismatch");
  const std::size_t n = resampled_length(start_sec, end_sec, target_rate_hz);
  if (n == 0) throw ProtocolError("segment shorter than one resampling interval");

  std::vector<double> sums(n, 0.0);
  std::vector<std::size_t> counts(n, 0);
  std::size_t in_segment = 0;
  for (std::size_t k = 0; k < t_sec.size(); ++k) {
    const double t = t_sec[k];
    if (t < start_sec || t >= end_sec) continue;
    auto bin = static_cast<std::size_t>(std::floor((t - start_sec) * target_rate_hz));
    if (bin >= n) bin = n - 1;
    sums[bin] += values[k];
    ++counts[bin];
    ++in_segment;
  }
  if (in_segment == 0) throw ProtocolError("no breath samples inside segment");

  std::vector<double> out(n);
  // Leading empty intervals take the first populated interval's value.
  std::size_t first = 0;
  while (counts[first] == 0) ++first;
  double carry = sums[first] / static_cast<double>(counts[first]);
  for (std::size_t i = 0; i < n; ++i) {
    if (counts[i] > 0) carry = sums[i] / static_cast<double>(counts[i]);
    out[i] = carry;
  }
  return out;
}

}  // namespace eeb
