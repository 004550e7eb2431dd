#ifndef SILT_STABLE_SAMPLER_HPP
#define SILT_STABLE_SAMPLER_HPP

#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

#include "silt/rng.hpp"
#include "silt/stable_spec.hpp"

namespace silt {

/// Symmetric stable variate with E exp(i l X) = exp(-|l|^alpha), 0 < alpha <= 2,
/// by the Chambers-Mallows-Stuck transform.
inline double standard_symmetric_stable(Rng& rng, double alpha)
{
  const double v = std::numbers::pi * (rng.uniform_open() - 0.5);
  if (alpha == 1.0)
    return std::tan(v);
  const double w = rng.exponential();
  return std::sin(alpha * v) / std::pow(std::cos(v), 1.0 / alpha) *
         std::pow(std::cos((1.0 - alpha) * v) / w, (1.0 - alpha) / alpha);
}

/// Totally skewed (positive) stable variate with E exp(-u S) = exp(-u^alpha), 0 < alpha < 1.
/// This is the skew-one Chambers-Mallows-Stuck transform in Kanter's form.
inline double standard_positive_stable(Rng& rng, double alpha)
{
  if (!(alpha > 0.0 && alpha < 1.0))
    throw std::invalid_argument("positive stable subordinator needs 0 < alpha < 1 (beta = 2 has no subordinator)");
  const double u = std::numbers::pi * rng.uniform_open();
  const double w = rng.exponential();
  return std::sin(alpha * u) / std::pow(std::sin(u), 1.0 / alpha) *
         std::pow(std::sin((1.0 - alpha) * u) / w, (1.0 - alpha) / alpha);
}

/// Increment over a time step dt for the subordinated isotropic branch
/// X = B(2 S): S is a (beta/2)-stable subordinator with E exp(-u S_dt) = exp(-c dt u^{beta/2})
/// so that E exp(i l.X) = E exp(-|l|^2 S) = exp(-c dt |l|^beta).
inline void subordinated_increment(Rng& rng, double beta, double c_dt, std::span<double> out)
{
  const double s = std::pow(c_dt, 2.0 / beta) * standard_positive_stable(rng, 0.5 * beta);
  const double sd = std::sqrt(2.0 * s);
  for (double& x : out)
    x = sd * rng.normal();
}

/// Draws one increment of X over dt into `out` (length spec.dim).
inline void sample_increment(const StableSpec& spec, double dt, Rng& rng, std::span<double> out)
{
  const double beta = spec.beta;
  if (beta == 2.0) {
    for (std::size_t i = 0; i < out.size(); ++i)
      out[i] = std::sqrt(2.0 * spec.coeff(static_cast<int>(i)) * dt) * rng.normal();
    return;
  }
  if (spec.family == Family::isotropic && spec.dim >= 2) {
    subordinated_increment(rng, beta, spec.coeffs[0] * dt, out);
    return;
  }
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = std::pow(spec.coeff(static_cast<int>(i)) * dt, 1.0 / beta) * standard_symmetric_stable(rng, beta);
}

/// A path observed on the uniform grid t_k = k t_end / n_steps, k = 0..n_steps.
struct PathSample {
  StableSpec spec;
  double t_end = 1.0;
  int n_steps = 0;
  std::uint64_t seed = 0;
  std::uint64_t stream_id = 0;
  /// Row-major, (n_steps + 1) x dim.
  std::vector<double> positions;

  double dt() const { return t_end / n_steps; }
  std::size_t size() const { return static_cast<std::size_t>(n_steps) + 1; }
  std::span<const double> point(std::size_t k) const
  {
    const auto d = static_cast<std::size_t>(spec.dim);
    return {positions.data() + k * d, d};
  }
};

/// Exact simulation of X on a uniform grid. The result is a pure function of the arguments.
inline PathSample sample_path(const StableSpec& spec, std::span<const double> start, double t_end, int n_steps,
                              std::uint64_t seed, std::uint64_t stream_id)
{
  spec.validate();
  if (n_steps < 1)
    throw std::invalid_argument("sample_path: n_steps must be at least 1");
  if (!(t_end > 0.0))
    throw std::invalid_argument("sample_path: t_end must be positive");
  const auto d = static_cast<std::size_t>(spec.dim);
  if (start.size() != d)
    throw std::invalid_argument("sample_path: start point has wrong dimension");

  PathSample path{spec, t_end, n_steps, seed, stream_id, {}};
  path.positions.resize((static_cast<std::size_t>(n_steps) + 1) * d);
  std::copy(start.begin(), start.end(), path.positions.begin());

  Rng rng(seed, stream_id);
  const double dt = t_end / n_steps;
  std::vector<double> inc(d);
  for (std::size_t k = 1; k <= static_cast<std::size_t>(n_steps); ++k) {
    sample_increment(spec, dt, rng, inc);
    for (std::size_t j = 0; j < d; ++j)
      path.positions[k * d + j] = path.positions[(k - 1) * d + j] + inc[j];
  }
  return path;
}

/// Path started at the origin.
inline PathSample sample_path(const StableSpec& spec, double t_end, int n_steps, std::uint64_t seed,
                              std::uint64_t stream_id)
{
  const std::vector<double> origin(static_cast<std::size_t>(spec.dim), 0.0);
  return sample_path(spec, origin, t_end, n_steps, seed, stream_id);
}

} // namespace silt

#endif // SILT_STABLE_SAMPLER_HPP
