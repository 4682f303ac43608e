#pragma once

#include <span>
#include <vector>

namespace eeb {

// sqrt(mean((pred - target)^2)). Throws DomainError on empty input.
double rmse(std::span<const double> pred, std::span<const double> target);

// rmse / mean_ee. Throws DomainError when mean_ee <= 0.
double nrmse(double rmse_value, double mean_ee);

// Linear interpolation between order statistics at h = (n - 1) q.
double quantile(std::span<const double> values, double q);

struct BoxplotStats {
  std::size_t n = 0;
  double median = 0.0;
  double q25 = 0.0;
  double q75 = 0.0;
  double whisker_lo = 0.0;  // smallest value >= q25 - 1.5 IQR
  double whisker_hi = 0.0;  // largest value <= q75 + 1.5 IQR
  std::vector<double> outliers;
};

BoxplotStats boxplot(std::span<const double> values);

}  // namespace eeb
