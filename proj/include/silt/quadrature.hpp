#ifndef SILT_QUADRATURE_HPP
#define SILT_QUADRATURE_HPP

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "silt/stable_spec.hpp"

namespace silt::quad {

/// Adaptive Gauss-Kronrod (31 points) on [a, b].
///
/// The interval is mapped onto [0, 1] first: Boost's error estimate carries an
/// absolute floor that never converges on very short intervals.
template <class F>
double adaptive(F&& f, double a, double b, double rel_tol = 1e-13)
{
  if (!(b > a))
    return 0.0;
  const double width = b - a;
  auto unit = [&](double s) { return f(a + width * s); };
  return width * boost::math::quadrature::gauss_kronrod<double, 31>::integrate(unit, 0.0, 1.0, 15, rel_tol);
}

/// Integral over [0, upper] split into panels [0, r0], [r0, 2 r0], [2 r0, 4 r0], ...
/// Each panel is integrated adaptively. Suited to radial integrands whose scale
/// of variation spans many decades.
template <class F>
double geometric_panels(F&& f, double r0, double upper, double rel_tol = 1e-13)
{
  if (!(r0 > 0.0) || !(upper > 0.0))
    throw std::invalid_argument("geometric_panels: scales must be positive");
  double total = adaptive(f, 0.0, std::min(r0, upper), rel_tol);
  for (double lo = r0; lo < upper; lo *= 2.0)
    total += adaptive(f, lo, std::min(2.0 * lo, upper), rel_tol);
  return total;
}

/// Fixed-order composite Gauss-Legendre: 16 geometric panels of 32 nodes (512 nodes)
/// covering [0, upper], the first panel being [0, upper * 2^-15].
template <class F>
double gauss_legendre_512(F&& f, double upper)
{
  using GL = boost::math::quadrature::gauss<double, 32>;
  double total = 0.0;
  double hi = upper;
  for (int panel = 0; panel < 16; ++panel) {
    const double lo = panel == 15 ? 0.0 : 0.5 * hi;
    total += GL::integrate(f, lo, hi);
    hi = lo;
  }
  return total;
}

/// Surface area of the unit sphere S^{d-1} in R^d.
inline double sphere_area(int d)
{
  return 2.0 * std::pow(std::numbers::pi, 0.5 * d) / std::tgamma(0.5 * d);
}

/// (2 pi)^{-d} times the integral over R^d of g(psi(p), |p|^2).
///
/// `g` must be a function of (psi value, squared radius). `scale_hint` is a
/// radius at which the integrand starts to vary and `cutoff` a radius beyond
/// which it is negligible. Isotropic specs reduce to one radial integral;
/// separable specs in d = 2 use polar coordinates with an adaptive angular
/// integral over the first quadrant (psi is even in each coordinate).
template <class G>
double fourier_integral(const StableSpec& spec, G&& g, double scale_hint, double cutoff, double rel_tol = 1e-13)
{
  const int d = spec.dim;
  const double beta = spec.beta;
  const double r0 = std::min(scale_hint, cutoff) * 1e-6;
  const double norm = std::pow(2.0 * std::numbers::pi, -d);
  auto radial = [&](double c) {
    auto integrand = [&](double r) {
      if (r == 0.0)
        return d == 1 ? g(0.0, 0.0) : 0.0;
      return std::pow(r, d - 1) * g(c * std::pow(r, beta), r * r);
    };
    return geometric_panels(integrand, r0, cutoff, rel_tol);
  };
  if (spec.family == Family::isotropic || d == 1)
    return norm * sphere_area(d) * radial(spec.coeff(0));
  if (d == 2) {
    auto angular = [&](double theta) {
      const double c = spec.coeffs[0] * std::pow(std::cos(theta), beta) + spec.coeffs[1] * std::pow(std::sin(theta), beta);
      return radial(c);
    };
    return norm * 4.0 * adaptive(angular, 0.0, 0.5 * std::numbers::pi, 1e-11);
  }
  throw std::logic_error("fourier_integral: separable spectra are only integrated for d <= 2");
}

} // namespace silt::quad

#endif // SILT_QUADRATURE_HPP
