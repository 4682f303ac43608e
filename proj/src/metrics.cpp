#include "eeb/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "eeb/errors.hpp"

namespace eeb {

double rmse(std::span<const double> pred, std::span<const double> target) {
  if (pred.size() != target.size()) throw ContractError("rmse: length mismatch");
  if (pred.empty()) throw DomainError("rmse of empty input");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - target[i];
    s += d * d;
  }
  return std::sqrt(s / static_cast<double>(pred.size()));
}

double nrmse(double rmse_value, double mean_ee) {
  if (!(mean_ee > 0.0)) throw DomainError("nrmse needs a positive mean EE");
  return rmse_value / mean_ee;
}

double quantile(std::span<const double> values, double q) {
  if (values.empty()) throw DomainError("quantile of empty input");
  if (q < 0.0 || q > 1.0) throw DomainError("quantile level outside [0, 1]");
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  const double h = static_cast<double>(v.size() - 1) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

BoxplotStats boxplot(std::span<const double> values) {
  if (values.empty()) throw DomainError("boxplot of empty input");
  BoxplotStats b;
  b.n = values.size();
  b.median = quantile(values, 0.5);
  b.q25 = quantile(values, 0.25);
  b.q75 = quantile(values, 0.75);
  const double iqr = b.q75 - b.q25;
  const double lo_fence = b.q25 - 1.5 * iqr;
  const double hi_fence = b.q75 + 1.5 * iqr;
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  b.whisker_lo = *std::find_if(v.begin(), v.end(), [&](double x) { return x >= lo_fence; });
  b.whisker_hi = *std::find_if(v.rbegin(), v.rend(), [&](double x) { return x <= hi_fence; });
  for (double x : v) {
    if (x < lo_fence || x > hi_fence) b.outliers.push_back(x);
  }
  return b;
}

}  // namespace eeb
