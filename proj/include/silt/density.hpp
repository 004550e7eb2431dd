#ifndef SILT_DENSITY_HPP
#define SILT_DENSITY_HPP

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "silt/quadrature.hpp"
#include "silt/stable_spec.hpp"

namespace silt {

namespace detail {

// p_1(0) of the 1D law with psi(p) = c |p|^beta, by 512-node Gauss-Legendre on [0, R]
// where exp(-c R^beta) < 1e-16.
inline double density_at_zero_1d_quadrature(double beta, double c)
{
  const double upper = std::pow(37.0 / c, 1.0 / beta);
  auto integrand = [=](double p) { return std::exp(-c * std::pow(p, beta)); };
  return quad::gauss_legendre_512(integrand, upper) / std::numbers::pi;
}

} // namespace detail

/// Transition density of X_t at the origin, p_t(0) = (2 pi)^{-d} int exp(-t psi(p)) dp.
///
/// Isotropic: p_1(0) = |S^{d-1}| Gamma(d/beta) / (beta (2 pi)^d c^{d/beta}).
/// Separable: product of the one-dimensional values, each by quadrature.
/// General t by scaling, p_t(0) = t^{-d/beta} p_1(0).
inline double density_at_zero(const StableSpec& spec, double t = 1.0)
{
  spec.validate();
  if (!(t > 0.0))
    throw std::invalid_argument("density_at_zero: t must be positive");
  const int d = spec.dim;
  const double beta = spec.beta;
  double p1 = 1.0;
  if (spec.family == Family::isotropic) {
    p1 = quad::sphere_area(d) * std::tgamma(d / beta) /
         (beta * std::pow(2.0 * std::numbers::pi, d) * std::pow(spec.coeffs[0], d / beta));
  } else {
    for (double c : spec.coeffs)
      p1 *= detail::density_at_zero_1d_quadrature(beta, c);
  }
  return t == 1.0 ? p1 : std::pow(t, -d / beta) * p1;
}

/// c_psi = p_1(0) / ((d/beta - 1)(2 - d/beta)); requires d/2 < beta < d.
inline double c_psi(const StableSpec& spec)
{
  spec.validate();
  const double r = spec.d_over_beta();
  if (!(spec.beta > spec.dim / 2.0) || !(spec.beta < spec.dim))
    throw GateError("c_psi needs d/2 < beta < d strictly (beta = d uses the logarithmic mean)");
  return density_at_zero(spec) / ((r - 1.0) * (2.0 - r));
}

/// Exact mean of the mutual intersection local time alpha_{s,t} for two
/// independent copies started at the same point.
///   beta < d:  c_psi [s^{2-d/beta} + t^{2-d/beta} - (s+t)^{2-d/beta}]
///   beta = d:  p_1(0) [(s+t) log(s+t) - t log t - s log s]
inline double alpha_mean_coincident(const StableSpec& spec, double s, double t)
{
  spec.require_alpha_gate();
  if (!(s > 0.0) || !(t > 0.0))
    throw std::invalid_argument("alpha_mean_coincident: s and t must be positive");
  if (spec.beta == static_cast<double>(spec.dim)) {
    const double u = s + t;
    return density_at_zero(spec) * (u * std::log(u) - t * std::log(t) - s * std::log(s));
  }
  const double e = 2.0 - spec.d_over_beta();
  return c_psi(spec) * (std::pow(s, e) + std::pow(t, e) - std::pow(s + t, e));
}

} // namespace silt

#endif // SILT_DENSITY_HPP
