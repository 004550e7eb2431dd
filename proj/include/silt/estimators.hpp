#ifndef SILT_ESTIMATORS_HPP
#define SILT_ESTIMATORS_HPP

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <variant>
#include <vector>

#include "silt/kernel.hpp"
#include "silt/pair_sums.hpp"
#include "silt/quadrature.hpp"
#include "silt/stable_sampler.hpp"

// Regularized intersection local times of sampled paths.
//
// Time integrals are discretized with the composite trapezoid rule on the path
// grid: point k carries weight w_k = dt (dt/2 at both ends). Over the triangle
// {r < s} the sum runs over grid pairs i < j plus the diagonal band
// sum_k w_k^2 f_eps(0) taken with weight 1/2, so that
//
//   triangle sum = (full square sum) / 2,   full square = 2 * (pairs i<j) + band.
//
// The band is deterministic (f_eps(0) is known) and including it removes the
// O(dt / eps^d) bias the bare i < j sum carries against the continuum mean.

namespace silt {

/// A regularized intersection-local-time value and how it was produced.
struct GammaEstimate {
  double value = 0.0;
  double t_end = 0.0;
  double epsilon = 0.0;
  int n_steps = 0;
  bool centered = false;
  double std_error = std::numeric_limits<double>::quiet_NaN();
  std::uint64_t seed = 0;
  std::uint64_t stream_id = 0;
  /// eps below the grid resolution dt^{1/beta}; the value is still computed.
  bool resolution_warning = false;
};

/// Trapezoid weights for n_steps intervals of length dt.
inline std::vector<double> trapezoid_weights(int n_steps, double dt)
{
  std::vector<double> w(static_cast<std::size_t>(n_steps) + 1, dt);
  w.front() *= 0.5;
  w.back() *= 0.5;
  return w;
}

inline bool below_resolution(const StableSpec& spec, double dt, double eps)
{
  return eps < std::pow(dt, 1.0 / spec.beta);
}

// ---------------------------------------------------------------------------
// Closed-form time integrals of exp(-(s - r) u).

namespace detail {

// (x + expm1(-x)) / x^2, continuous at 0 with value 1/2.
inline double triangle_profile(double x)
{
  if (x < 0.1) {
    // sum_{k>=0} (-x)^k / (k+2)!
    double term = 0.5;
    double sum = 0.5;
    for (int k = 1; k < 14; ++k) {
      term *= -x / (k + 2);
      sum += term;
    }
    return sum;
  }
  return (x + std::expm1(-x)) / (x * x);
}

// -expm1(-x) / x, continuous at 0 with value 1.
inline double decay_profile(double x)
{
  if (x < 1e-8)
    return 1.0 - 0.5 * x;
  return -std::expm1(-x) / x;
}

} // namespace detail

/// int_0^t int_0^s exp(-(s - r) u) dr ds = (t u - 1 + e^{-t u}) / u^2.
inline double triangle_time_integral(double t, double u)
{
  return t * t * detail::triangle_profile(t * u);
}

/// Time rectangle r in [r_lo, r_hi], s in [s_lo, s_hi] with r_hi <= s_lo.
struct TimeRect {
  double r_lo = 0.0, r_hi = 0.0, s_lo = 0.0, s_hi = 0.0;

  double area() const { return (r_hi - r_lo) * (s_hi - s_lo); }
};

/// The triangle B_t = {0 <= r <= s <= t}.
struct TimeTriangle {
  double t = 1.0;
};

using TimeRegion = std::variant<TimeRect, TimeTriangle>;

/// int_{r_lo}^{r_hi} int_{s_lo}^{s_hi} exp(-(s - r) u) ds dr
///   = e^{-(s_lo - r_hi) u} (1 - e^{-(s_hi - s_lo) u}) (1 - e^{-(r_hi - r_lo) u}) / u^2.
inline double rectangle_time_integral(const TimeRect& b, double u)
{
  const double gap = b.s_lo - b.r_hi;
  const double hs = b.s_hi - b.s_lo;
  const double hr = b.r_hi - b.r_lo;
  return std::exp(-gap * u) * hs * hr * detail::decay_profile(hs * u) * detail::decay_profile(hr * u);
}

namespace detail {

inline double fourier_cutoff(const MollifierKernel& k) { return std::sqrt(80.0) / k.epsilon(); }

inline double time_scale_radius(const StableSpec& spec, double t)
{
  return std::pow(spec.max_coeff() * t, -1.0 / spec.beta);
}

inline void check_kernel(const StableSpec& spec, const MollifierKernel& kernel)
{
  if (kernel.dim() != spec.dim)
    throw std::invalid_argument("kernel dimension does not match the spec");
}

} // namespace detail

/// E int_0^t int_0^s f_eps(X_s - X_r) dr ds
///   = (2 pi)^{-d} int (t psi - 1 + e^{-t psi}) / psi^2 * f-hat(eps p) dp.
inline double expected_self_ilt(const StableSpec& spec, double t, const MollifierKernel& kernel)
{
  spec.validate();
  detail::check_kernel(spec, kernel);
  if (!(t > 0.0))
    throw std::invalid_argument("expected_self_ilt: t must be positive");
  auto g = [&](double u, double p2) { return triangle_time_integral(t, u) * kernel.fourier_p2(p2); };
  const double hint = std::min(detail::time_scale_radius(spec, t), 1.0 / kernel.epsilon());
  return quad::fourier_integral(spec, g, hint, detail::fourier_cutoff(kernel));
}

/// E of the rectangle functional, same Fourier formula with the rectangle's time integral.
inline double expected_rect_ilt(const StableSpec& spec, const TimeRect& b, const MollifierKernel& kernel)
{
  spec.validate();
  detail::check_kernel(spec, kernel);
  if (b.area() <= 0.0)
    return 0.0;
  auto g = [&](double u, double p2) { return rectangle_time_integral(b, u) * kernel.fourier_p2(p2); };
  const double hint = std::min(detail::time_scale_radius(spec, b.s_hi - b.r_lo), 1.0 / kernel.epsilon());
  return quad::fourier_integral(spec, g, hint, detail::fourier_cutoff(kernel));
}

// ---------------------------------------------------------------------------
// Raw sums on paths.

namespace detail {

inline pairs::WeightedPoints points_of(const PathSample& path, std::span<const double> weights, std::size_t first,
                                       std::size_t last)
{
  const auto d = static_cast<std::size_t>(path.spec.dim);
  return {std::span<const double>(path.positions).subspan(first * d, (last - first) * d),
          weights.subspan(first, last - first), path.spec.dim};
}

inline std::vector<double> peaks(std::span<const double> eps, int dim)
{
  std::vector<double> out;
  for (double e : eps)
    out.push_back(MollifierKernel(e, dim).peak());
  return out;
}

} // namespace detail

/// Off-diagonal pair sum and diagonal band of the self functional over grid indices [first, last).
struct SelfIltParts {
  double off_diagonal = 0.0; // sum_{i<j} w_i w_j f_eps(X_j - X_i)
  double diagonal_band = 0.0; // sum_i w_i^2 f_eps(0)

  double triangle() const { return off_diagonal + 0.5 * diagonal_band; }
  double full_square() const { return 2.0 * off_diagonal + diagonal_band; }
};

inline std::vector<SelfIltParts> self_ilt_parts_ladder(const PathSample& path, std::span<const double> weights,
                                                       std::size_t first, std::size_t last,
                                                       std::span<const double> eps)
{
  const auto pts = detail::points_of(path, weights, first, last);
  const auto sums = pairs::self_sums(pts, eps);
  const auto pk = detail::peaks(eps, path.spec.dim);
  double w2 = 0.0;
  for (double w : pts.weights)
    w2 += w * w;
  std::vector<SelfIltParts> out(eps.size());
  for (std::size_t k = 0; k < eps.size(); ++k)
    out[k] = {pk[k] * sums[k], pk[k] * w2};
  return out;
}

inline SelfIltParts self_ilt_parts(const PathSample& path, const MollifierKernel& kernel)
{
  const auto w = trapezoid_weights(path.n_steps, path.dt());
  const double eps = kernel.epsilon();
  return self_ilt_parts_ladder(path, w, 0, path.size(), std::span<const double>(&eps, 1)).front();
}

/// Full-square double sum sum_{i,j} w_i w_j f_eps(X_i - X_j), computed as a cross sum of the
/// path with itself (every ordered pair and the diagonal).
inline double full_square_ilt(const PathSample& path, const MollifierKernel& kernel)
{
  const auto w = trapezoid_weights(path.n_steps, path.dt());
  const auto pts = detail::points_of(path, w, 0, path.size());
  const double eps = kernel.epsilon();
  return kernel.peak() * pairs::cross_sums(pts, pts, std::span<const double>(&eps, 1)).front();
}

inline GammaEstimate make_estimate(const PathSample& path, double eps, double value, bool centered)
{
  GammaEstimate g;
  g.value = value;
  g.t_end = path.t_end;
  g.epsilon = eps;
  g.n_steps = path.n_steps;
  g.centered = centered;
  g.seed = path.seed;
  g.stream_id = path.stream_id;
  g.resolution_warning = below_resolution(path.spec, path.dt(), eps);
  return g;
}

/// alpha_{s,t,eps} = int_0^s int_0^t f_eps(X_u - Y_r) dr du over the full rectangle, for each eps.
inline std::vector<GammaEstimate> mutual_ilt_ladder(const PathSample& x, const PathSample& y,
                                                    std::span<const double> eps)
{
  if (!(x.spec == y.spec))
    throw std::invalid_argument("mutual_ilt: paths come from different specs");
  const auto wx = trapezoid_weights(x.n_steps, x.dt());
  const auto wy = trapezoid_weights(y.n_steps, y.dt());
  const auto sums =
      pairs::cross_sums(detail::points_of(x, wx, 0, x.size()), detail::points_of(y, wy, 0, y.size()), eps);
  const auto pk = detail::peaks(eps, x.spec.dim);
  std::vector<GammaEstimate> out;
  for (std::size_t k = 0; k < eps.size(); ++k) {
    auto g = make_estimate(x, eps[k], pk[k] * sums[k], false);
    g.resolution_warning = g.resolution_warning || below_resolution(y.spec, y.dt(), eps[k]);
    out.push_back(g);
  }
  return out;
}

inline GammaEstimate mutual_ilt(const PathSample& x, const PathSample& y, const MollifierKernel& kernel)
{
  const double eps = kernel.epsilon();
  return mutual_ilt_ladder(x, y, std::span<const double>(&eps, 1)).front();
}

/// int_0^t int_0^s f_eps(X_s - X_r) dr ds over the whole path, for each eps.
inline std::vector<GammaEstimate> self_ilt_raw_ladder(const PathSample& path, std::span<const double> eps)
{
  path.spec.require_gamma_gate();
  const auto w = trapezoid_weights(path.n_steps, path.dt());
  const auto parts = self_ilt_parts_ladder(path, w, 0, path.size(), eps);
  std::vector<GammaEstimate> out;
  for (std::size_t k = 0; k < eps.size(); ++k)
    out.push_back(make_estimate(path, eps[k], parts[k].triangle(), false));
  return out;
}

inline GammaEstimate self_ilt_raw(const PathSample& path, const MollifierKernel& kernel)
{
  const double eps = kernel.epsilon();
  return self_ilt_raw_ladder(path, std::span<const double>(&eps, 1)).front();
}

/// gamma_{t,eps} = raw - E raw, with the expectations supplied per eps (see expected_self_ilt).
inline std::vector<GammaEstimate> gamma_regularized_ladder(const PathSample& path, std::span<const double> eps,
                                                           std::span<const double> expected)
{
  if (expected.size() != eps.size())
    throw std::invalid_argument("gamma_regularized_ladder: one expectation per epsilon required");
  auto out = self_ilt_raw_ladder(path, eps);
  for (std::size_t k = 0; k < out.size(); ++k) {
    out[k].value -= expected[k];
    out[k].centered = true;
  }
  return out;
}

inline GammaEstimate gamma_regularized(const PathSample& path, const MollifierKernel& kernel)
{
  const double eps = kernel.epsilon();
  const double e = expected_self_ilt(path.spec, path.t_end, kernel);
  return gamma_regularized_ladder(path, std::span<const double>(&eps, 1), std::span<const double>(&e, 1)).front();
}

// ---------------------------------------------------------------------------
// Functionals over time regions.

namespace detail {

inline std::size_t grid_index_at_or_after(const PathSample& path, double time)
{
  const double x = time / path.dt();
  const double snapped = std::ceil(x - 1e-9 * std::max(1.0, std::abs(x)));
  return static_cast<std::size_t>(std::max(0.0, snapped));
}

// Grid indices whose times lie in [lo, hi); the final grid point is included when hi = t_end.
inline std::pair<std::size_t, std::size_t> index_range(const PathSample& path, double lo, double hi)
{
  const std::size_t first = grid_index_at_or_after(path, lo);
  std::size_t last = grid_index_at_or_after(path, hi);
  if (std::abs(hi - path.t_end) <= 1e-12 * path.t_end)
    last = path.size();
  return {first, std::max(first, std::min(last, path.size()))};
}

} // namespace detail

namespace detail {

inline void check_rect(const PathSample& path, const TimeRect& b)
{
  const double tol = 1e-12 * path.t_end;
  if (b.r_lo < -tol || b.s_hi > path.t_end + tol || b.r_lo > b.r_hi || b.s_lo > b.s_hi)
    throw std::invalid_argument("gamma_on_cell: rectangle outside the path's time range");
  if (b.r_hi > b.s_lo + tol)
    throw std::invalid_argument("gamma_on_cell: rectangle must lie above the diagonal (r_hi <= s_lo)");
}

// Uncentered grid sum over the pairs of a rectangle, with the path's trapezoid weights.
inline double raw_on_rect(const PathSample& path, std::span<const double> w, const TimeRect& b,
                          const MollifierKernel& kernel)
{
  if (b.area() <= 0.0)
    return 0.0;
  const double eps = kernel.epsilon();
  const auto [r0, r1] = index_range(path, b.r_lo, b.r_hi);
  const auto [s0, s1] = index_range(path, b.s_lo, b.s_hi);
  return kernel.peak() *
         pairs::cross_sums(points_of(path, w, r0, r1), points_of(path, w, s0, s1), std::span<const double>(&eps, 1))
             .front();
}

} // namespace detail

/// gamma_eps(B) for a rectangle above the diagonal or a triangle B_t with t on the grid.
///
/// Rectangles use the path's own trapezoid weights, so rectangles that partition
/// the grid pairs reassociate the same terms. A triangle B_t uses the trapezoid
/// weights of the prefix [0, t]; B_{t_end} is exactly gamma_regularized.
inline GammaEstimate gamma_on_cell(const PathSample& path, const TimeRegion& region, const MollifierKernel& kernel)
{
  path.spec.require_gamma_gate();
  detail::check_kernel(path.spec, kernel);
  const double eps = kernel.epsilon();

  if (const auto* tri = std::get_if<TimeTriangle>(&region)) {
    if (tri->t < 0.0 || tri->t > path.t_end * (1.0 + 1e-12))
      throw std::invalid_argument("gamma_on_cell: triangle exceeds the path's time range");
    const double steps = tri->t / path.dt();
    const auto m = static_cast<int>(std::llround(steps));
    if (std::abs(steps - m) > 1e-9 * std::max(1.0, steps))
      throw std::invalid_argument("gamma_on_cell: triangle end must lie on the time grid");
    if (m == 0)
      return make_estimate(path, eps, 0.0, true);
    const auto w = trapezoid_weights(m, path.dt());
    const auto parts =
        self_ilt_parts_ladder(path, w, 0, static_cast<std::size_t>(m) + 1, std::span<const double>(&eps, 1)).front();
    const double mean = expected_self_ilt(path.spec, m * path.dt(), kernel);
    return make_estimate(path, eps, parts.triangle() - mean, true);
  }

  const auto& b = std::get<TimeRect>(region);
  detail::check_rect(path, b);
  if (b.area() <= 0.0)
    return make_estimate(path, eps, 0.0, true);
  const auto w = trapezoid_weights(path.n_steps, path.dt());
  const double raw = detail::raw_on_rect(path, w, b, kernel);
  return make_estimate(path, eps, raw - expected_rect_ilt(path.spec, b, kernel), true);
}

/// Dyadic cell A_k^n = [(2k-2) 2^-n, (2k-1) 2^-n] x [(2k-1) 2^-n, 2k 2^-n] of the unit triangle.
struct DyadicCell {
  int level = 1; // n >= 1
  int index = 1; // k in 1..2^{n-1}

  TimeRect rect(double t_end = 1.0) const
  {
    const double h = t_end * std::ldexp(1.0, -level);
    return {(2 * index - 2) * h, (2 * index - 1) * h, (2 * index - 1) * h, 2 * index * h};
  }
};

/// All cells with level <= max_level, ordered by (level, index).
inline std::vector<DyadicCell> dyadic_cells(int max_level)
{
  if (max_level < 1 || max_level > 30)
    throw std::invalid_argument("dyadic_cells: max_level must be in 1..30");
  std::vector<DyadicCell> cells;
  for (int n = 1; n <= max_level; ++n)
    for (int k = 1; k <= (1 << (n - 1)); ++k)
      cells.push_back({n, k});
  return cells;
}

/// Path-independent means of the dyadic functionals for one (spec, eps, max_level).
struct DyadicMeans {
  int max_level = 1;
  double epsilon = 0.0;
  std::vector<double> cells; // in dyadic_cells order
  double total = 0.0;        // E of the whole triangle B_1
};

inline DyadicMeans dyadic_means(const StableSpec& spec, const MollifierKernel& kernel, int max_level)
{
  DyadicMeans m{max_level, kernel.epsilon(), {}, expected_self_ilt(spec, 1.0, kernel)};
  for (const auto& cell : dyadic_cells(max_level))
    m.cells.push_back(expected_rect_ilt(spec, cell.rect(), kernel));
  return m;
}

struct DyadicDecomposition {
  std::vector<std::pair<DyadicCell, GammaEstimate>> cells;
  /// Diagonal blocks of side 2^-max_level plus the diagonal band, centered.
  GammaEstimate residual;
  /// gamma_{1,eps} computed directly on the whole triangle.
  GammaEstimate direct;

  double partition_sum() const
  {
    double s = 0.0;
    for (const auto& c : cells)
      s += c.second.value;
    return s + residual.value;
  }
};

/// gamma_{1,eps} split into the dyadic cells up to max_level plus the near-diagonal residual.
///
/// The residual raw sum is computed directly from the diagonal blocks; its mean is
/// E gamma(B_1) minus the cell means (the exact continuum complement).
inline DyadicDecomposition dyadic_decompose(const PathSample& path, const MollifierKernel& kernel,
                                            const DyadicMeans& means)
{
  path.spec.require_gamma_gate();
  detail::check_kernel(path.spec, kernel);
  if (std::abs(path.t_end - 1.0) > 1e-12)
    throw std::invalid_argument("dyadic_decompose: path duration must be 1");
  if (means.epsilon != kernel.epsilon())
    throw std::invalid_argument("dyadic_decompose: means were computed for another epsilon");
  const int max_level = means.max_level;
  const auto w = trapezoid_weights(path.n_steps, path.dt());
  const double eps = kernel.epsilon();
  const std::span<const double> ladder(&eps, 1);

  DyadicDecomposition out;
  double cell_means = 0.0;
  const auto cells = dyadic_cells(max_level);
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const double raw = detail::raw_on_rect(path, w, cells[i].rect(), kernel);
    cell_means += means.cells[i];
    out.cells.emplace_back(cells[i], make_estimate(path, eps, raw - means.cells[i], true));
  }

  const int blocks = 1 << max_level;
  const double h = 1.0 / blocks;
  double raw = 0.0;
  double band = 0.0;
  for (int m = 0; m < blocks; ++m) {
    const auto [i0, i1] = detail::index_range(path, m * h, (m + 1) * h);
    const auto parts = self_ilt_parts_ladder(path, w, i0, i1, ladder).front();
    raw += parts.off_diagonal;
    band += parts.diagonal_band;
  }
  raw += 0.5 * band;
  out.residual = make_estimate(path, eps, raw - (means.total - cell_means), true);

  const auto direct = self_ilt_parts_ladder(path, w, 0, path.size(), ladder).front();
  out.direct = make_estimate(path, eps, direct.triangle() - means.total, true);
  return out;
}

inline DyadicDecomposition dyadic_decompose(const PathSample& path, const MollifierKernel& kernel, int max_level)
{
  return dyadic_decompose(path, kernel, dyadic_means(path.spec, kernel, max_level));
}

} // namespace silt

#endif // SILT_ESTIMATORS_HPP
