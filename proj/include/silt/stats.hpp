#ifndef SILT_STATS_HPP
#define SILT_STATS_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

// Small statistics toolkit used by the Monte Carlo analyses. Every reduction
// runs in index order so results are reproducible bit for bit.

namespace silt::stats {

struct MeanSe {
  double mean = std::numeric_limits<double>::quiet_NaN();
  double std_error = std::numeric_limits<double>::quiet_NaN();
  double std_dev = std::numeric_limits<double>::quiet_NaN();
  std::size_t n = 0;

  /// (mean - target) / std_error.
  double z_score(double target) const { return (mean - target) / std_error; }
};

/// Sample mean, standard deviation (n - 1 denominator) and standard error; NaN entries are skipped.
inline MeanSe mean_se(std::span<const double> x)
{
  MeanSe r;
  double sum = 0.0;
  for (double v : x)
    if (!std::isnan(v)) {
      sum += v;
      ++r.n;
    }
  if (r.n == 0)
    return r;
  r.mean = sum / static_cast<double>(r.n);
  if (r.n < 2)
    return r;
  double ss = 0.0;
  for (double v : x)
    if (!std::isnan(v))
      ss += (v - r.mean) * (v - r.mean);
  r.std_dev = std::sqrt(ss / static_cast<double>(r.n - 1));
  r.std_error = r.std_dev / std::sqrt(static_cast<double>(r.n));
  return r;
}

/// Linear-interpolation quantile of sorted data (type 7), q in [0, 1].
inline double quantile_sorted(std::span<const double> sorted, double q)
{
  if (sorted.empty())
    throw std::invalid_argument("quantile of empty data");
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

inline double quantile(std::vector<double> x, double q)
{
  std::sort(x.begin(), x.end());
  return quantile_sorted(x, q);
}

/// Asymptotic Kolmogorov distribution tail Q(t) = 2 sum_{k>=1} (-1)^{k-1} exp(-2 k^2 t^2).
inline double kolmogorov_tail(double t)
{
  if (t < 0.2)
    return 1.0;
  if (t < 1.0) {
    // Jacobi-transformed form converges fast for small t:
    // 1 - Q(t) = sqrt(2 pi) / t * sum_{k>=1} exp(-(2k-1)^2 pi^2 / (8 t^2)).
    const double pi2 = std::numbers::pi * std::numbers::pi;
    double s = 0.0;
    for (int k = 1; k <= 6; ++k)
      s += std::exp(-(2.0 * k - 1.0) * (2.0 * k - 1.0) * pi2 / (8.0 * t * t));
    return std::clamp(1.0 - std::sqrt(2.0 * std::numbers::pi) / t * s, 0.0, 1.0);
  }
  double s = 0.0;
  double sign = 1.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * t * t);
    s += sign * term;
    if (term < 1e-18)
      break;
    sign = -sign;
  }
  return std::clamp(2.0 * s, 0.0, 1.0);
}

struct KsResult {
  double statistic = 0.0;
  double p_value = 1.0;
  std::size_t n1 = 0;
  std::size_t n2 = 0;

  bool rejected(double level) const { return p_value < level; }
};

/// Two-sample Kolmogorov-Smirnov test with the asymptotic p-value
/// Q((sqrt(ne) + 0.12 + 0.11 / sqrt(ne)) D), ne = n1 n2 / (n1 + n2).
inline KsResult ks_two_sample(std::vector<double> a, std::vector<double> b)
{
  if (a.empty() || b.empty())
    throw std::invalid_argument("KS test needs two nonempty samples");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double n1 = static_cast<double>(a.size());
  const double n2 = static_cast<double>(b.size());
  std::size_t i = 0;
  std::size_t j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x)
      ++i;
    while (j < b.size() && b[j] <= x)
      ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / n1 - static_cast<double>(j) / n2));
  }
  const double ne = std::sqrt(n1 * n2 / (n1 + n2));
  return {d, kolmogorov_tail((ne + 0.12 + 0.11 / ne) * d), a.size(), b.size()};
}

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

/// Wilson score interval for a binomial proportion k / n.
inline Interval wilson_interval(std::size_t k, std::size_t n, double z = 1.959963984540054)
{
  if (n == 0)
    throw std::invalid_argument("wilson_interval: n must be positive");
  const double nn = static_cast<double>(n);
  const double p = static_cast<double>(k) / nn;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / nn;
  const double center = (p + z2 / (2.0 * nn)) / denom;
  const double half = z / denom * std::sqrt(p * (1.0 - p) / nn + z2 / (4.0 * nn * nn));
  return {std::max(0.0, center - half), std::min(1.0, center + half)};
}

struct LineFit {
  double slope = std::numeric_limits<double>::quiet_NaN();
  double intercept = std::numeric_limits<double>::quiet_NaN();
  double slope_se = std::numeric_limits<double>::quiet_NaN();
  double intercept_se = std::numeric_limits<double>::quiet_NaN();
};

/// Weighted least squares y = intercept + slope x with weights w_i = 1 / sigma_i^2.
/// Standard errors come from the weighted normal equations (known sigmas).
inline LineFit weighted_line_fit(std::span<const double> x, std::span<const double> y, std::span<const double> w)
{
  if (x.size() != y.size() || x.size() != w.size() || x.size() < 2)
    throw std::invalid_argument("weighted_line_fit: need at least two matching points");
  double sw = 0.0, sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sw += w[i];
    sx += w[i] * x[i];
    sy += w[i] * y[i];
    sxx += w[i] * x[i] * x[i];
    sxy += w[i] * x[i] * y[i];
  }
  const double det = sw * sxx - sx * sx;
  if (!(det > 0.0))
    throw std::invalid_argument("weighted_line_fit: degenerate abscissae");
  LineFit f;
  f.slope = (sw * sxy - sx * sy) / det;
  f.intercept = (sxx * sy - sx * sxy) / det;
  f.slope_se = std::sqrt(sw / det);
  f.intercept_se = std::sqrt(sxx / det);
  return f;
}

/// Ordinary least squares line.
inline LineFit line_fit(std::span<const double> x, std::span<const double> y)
{
  const std::vector<double> w(x.size(), 1.0);
  return weighted_line_fit(x, y, w);
}

} // namespace silt::stats

#endif // SILT_STATS_HPP
