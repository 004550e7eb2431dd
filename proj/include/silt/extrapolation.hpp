#ifndef SILT_EXTRAPOLATION_HPP
#define SILT_EXTRAPOLATION_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "silt/stats.hpp"

namespace silt {

/// Limit of a value ladder v(eps_k) as eps -> 0 under the model v = limit + A eps^rate.
struct Extrapolation {
  double value = std::numeric_limits<double>::quiet_NaN();
  double error_bar = std::numeric_limits<double>::quiet_NaN();
  double amplitude = std::numeric_limits<double>::quiet_NaN();
  /// Fitted rate; NaN for a flat ladder.
  double rate = std::numeric_limits<double>::quiet_NaN();
  bool converged = false;
  std::string note;
};

/// Fits v_k = limit + A eps_k^rate to a ladder of at least three strictly monotone eps values.
///
/// The rate comes from regressing log|v_k - v_{k+1}| on log eps_k (exact for a
/// geometric ladder); limit and A then follow by least squares at that rate.
/// The error bar is the RMS fit residual. Ladders whose successive differences
/// change sign or grow as eps shrinks are flagged as not converged and carry no value.
inline Extrapolation extrapolate_epsilon(std::span<const double> eps, std::span<const double> values)
{
  if (eps.size() != values.size())
    throw std::invalid_argument("extrapolate_epsilon: eps and values differ in length");
  if (eps.size() < 3)
    throw std::invalid_argument("extrapolate_epsilon: need at least three ladder points");
  const bool decreasing = eps[1] < eps[0];
  for (std::size_t k = 0; k < eps.size(); ++k) {
    if (!(eps[k] > 0.0))
      throw std::invalid_argument("extrapolate_epsilon: eps must be positive");
    if (k > 0 && (decreasing ? !(eps[k] < eps[k - 1]) : !(eps[k] > eps[k - 1])))
      throw std::invalid_argument("extrapolate_epsilon: eps ladder is not monotone");
  }

  // Work from the coarsest eps downwards.
  std::vector<double> e(eps.begin(), eps.end());
  std::vector<double> v(values.begin(), values.end());
  if (!decreasing) {
    std::reverse(e.begin(), e.end());
    std::reverse(v.begin(), v.end());
  }

  Extrapolation out;
  double scale = 0.0;
  for (double x : v)
    scale = std::max(scale, std::abs(x));
  const double flat_tol = 1e-13 * std::max(1.0, scale);
  std::vector<double> log_eps;
  std::vector<double> log_diff;
  int sign = 0;
  bool flat = true;
  for (std::size_t k = 0; k + 1 < v.size(); ++k) {
    const double d = v[k] - v[k + 1];
    if (std::abs(d) > flat_tol)
      flat = false;
    const int s = d > 0.0 ? 1 : (d < 0.0 ? -1 : 0);
    if (s != 0 && sign != 0 && s != sign) {
      out.note = "successive differences change sign";
      return out;
    }
    if (s != 0)
      sign = s;
    log_eps.push_back(std::log(e[k]));
    log_diff.push_back(std::log(std::abs(d)));
  }
  if (flat) {
    out.value = v.back();
    out.amplitude = 0.0;
    out.error_bar = 0.0;
    out.converged = true;
    out.note = "flat ladder";
    return out;
  }
  for (double x : log_diff)
    if (!std::isfinite(x)) {
      out.note = "vanishing difference inside a non-flat ladder";
      return out;
    }

  out.rate = stats::line_fit(log_eps, log_diff).slope;
  if (!(out.rate > 0.0) || !std::isfinite(out.rate)) {
    out.note = "differences do not shrink with eps";
    return out;
  }

  std::vector<double> basis;
  for (double x : e)
    basis.push_back(std::pow(x, out.rate));
  const auto fit = stats::line_fit(basis, v);
  out.value = fit.intercept;
  out.amplitude = fit.slope;
  double ss = 0.0;
  for (std::size_t k = 0; k < v.size(); ++k) {
    const double r = v[k] - (fit.intercept + fit.slope * basis[k]);
    ss += r * r;
  }
  out.error_bar = std::sqrt(ss / static_cast<double>(v.size()));
  out.converged = true;
  return out;
}

} // namespace silt

#endif // SILT_EXTRAPOLATION_HPP
