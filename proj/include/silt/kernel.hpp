#ifndef SILT_KERNEL_HPP
#define SILT_KERNEL_HPP

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace silt {

/// Gaussian approximate identity f_eps(x) = eps^{-d} f(x/eps) with
/// f(x) = (2 pi)^{-d/2} exp(-|x|^2/2), whose transform is exp(-eps^2 |p|^2 / 2).
///
/// f = h * h where h is the centered Gaussian density with variance 1/2 per
/// coordinate; h_eps has variance eps^2 / 2.
class MollifierKernel {
public:
  /// Pairs farther apart than cutoff_factor * eps are skipped by the pair sums;
  /// exp(-cutoff_factor^2 / 2) = exp(-32) ~ 1.3e-14 relative to the peak.
  static constexpr double cutoff_factor = 8.0;

  MollifierKernel(double epsilon, int dim) : eps_(epsilon), dim_(dim)
  {
    if (!(epsilon > 0.0) || !std::isfinite(epsilon))
      throw std::invalid_argument("kernel epsilon must be positive");
    if (dim < 1 || dim > 3)
      throw std::invalid_argument("kernel dimension must be 1, 2 or 3");
    peak_ = std::pow(2.0 * std::numbers::pi * eps_ * eps_, -0.5 * dim_);
    inv_two_eps2_ = 0.5 / (eps_ * eps_);
  }

  double epsilon() const noexcept { return eps_; }
  int dim() const noexcept { return dim_; }

  /// f_eps(0).
  double peak() const noexcept { return peak_; }
  double cutoff() const noexcept { return cutoff_factor * eps_; }

  /// f_eps at a point with squared norm r2.
  double value_r2(double r2) const noexcept { return peak_ * std::exp(-r2 * inv_two_eps2_); }

  /// f-hat(eps p) at squared frequency p2.
  double fourier_p2(double p2) const noexcept { return std::exp(-0.5 * eps_ * eps_ * p2); }

  /// h_eps at squared norm r2 (h_eps * h_eps = f_eps).
  double half_value_r2(double r2) const noexcept
  {
    const double var = 0.5 * eps_ * eps_;
    return std::pow(2.0 * std::numbers::pi * var, -0.5 * dim_) * std::exp(-0.5 * r2 / var);
  }

private:
  double eps_;
  int dim_;
  double peak_ = 0.0;
  double inv_two_eps2_ = 0.0;
};

} // namespace silt

#endif // SILT_KERNEL_HPP
