#ifndef SILT_VARIATIONAL_HPP
#define SILT_VARIATIONAL_HPP

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <future>
#include <limits>
#include <mutex>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

#include "silt/stable_spec.hpp"

// Discretization of
//
//   E(f, f) = int psi(p) |f^(p)|^2 dp,     f^(p) = (2 pi)^{-d/2} int f(x) e^{-i p.x} dx,
//   M(lambda) = sup { lambda ||f||_4^2 - E(f, f) : ||f||_2 = 1 }
//
// on the periodic box [-L, L)^d with N points per axis, x_j = -L + j h, h = 2L/N.
// Integrals are h^d times grid sums. With the unnormalized DFT F_k of the grid
// values, Plancherel gives
//
//   E = h^d / N^d * sum_k psi(p_k) |F_k|^2 = h^d * sum_j f_j (psi(D) f)_j,   p_k = pi k / L,
//
// where psi(D) f = IDFT(psi * DFT f) / N^d is exact on lattice frequencies.

namespace silt {

/// Periodic grid [-L, L)^d with N points per axis.
struct SpectralGrid {
  double L = 16.0;
  int N = 256;
  int d = 1;

  void validate() const
  {
    if (!(L > 0.0) || !std::isfinite(L))
      throw std::invalid_argument("SpectralGrid: L must be positive");
    if (N < 64 || (N & (N - 1)) != 0)
      throw std::invalid_argument("SpectralGrid: N must be a power of two >= 64");
    if (d < 1 || d > 3)
      throw std::invalid_argument("SpectralGrid: d must be 1, 2 or 3");
  }

  std::size_t size() const
  {
    std::size_t n = 1;
    for (int i = 0; i < d; ++i)
      n *= static_cast<std::size_t>(N);
    return n;
  }
  double spacing() const { return 2.0 * L / N; }
  double cell_volume() const { return std::pow(spacing(), d); }
  double coordinate(int j) const { return -L + j * spacing(); }
  /// Lattice frequency of FFT index k (k >= N/2 wraps to k - N).
  double frequency(int k) const { return std::numbers::pi * (k < N / 2 ? k : k - N) / L; }
};

namespace detail {

inline std::mutex& fftw_planner_mutex()
{
  static std::mutex m;
  return m;
}

} // namespace detail

/// psi(D) on a SpectralGrid via real-to-complex FFTs. Not shareable between threads;
/// build one per thread (planning is serialized internally).
class SpectralOperator {
public:
  SpectralOperator(const StableSpec& spec, const SpectralGrid& grid) : grid_(grid)
  {
    spec.validate();
    grid.validate();
    if (spec.dim != grid.d)
      throw std::invalid_argument("SpectralOperator: spec and grid dimensions differ");
    const int d = grid.d;
    const int N = grid.N;
    const int half = N / 2 + 1;
    n_real_ = grid.size();
    n_complex_ = n_real_ / static_cast<std::size_t>(N) * static_cast<std::size_t>(half);

    multiplier_.resize(n_complex_);
    weight_.resize(n_complex_);
    std::vector<double> p(static_cast<std::size_t>(d));
    for (std::size_t idx = 0; idx < n_complex_; ++idx) {
      std::size_t rem = idx;
      const int last = static_cast<int>(rem % static_cast<std::size_t>(half));
      rem /= static_cast<std::size_t>(half);
      p[static_cast<std::size_t>(d - 1)] = grid.frequency(last);
      for (int axis = d - 2; axis >= 0; --axis) {
        p[static_cast<std::size_t>(axis)] = grid.frequency(static_cast<int>(rem % static_cast<std::size_t>(N)));
        rem /= static_cast<std::size_t>(N);
      }
      multiplier_[idx] = psi_eval(spec, p);
      weight_[idx] = (last == 0 || last == N / 2) ? 1.0 : 2.0;
    }

    real_ = fftw_alloc_real(n_real_);
    spec_ = fftw_alloc_complex(n_complex_);
    std::vector<int> dims(static_cast<std::size_t>(d), N);
    std::lock_guard<std::mutex> lock(detail::fftw_planner_mutex());
    forward_ = fftw_plan_dft_r2c(d, dims.data(), real_, spec_, FFTW_ESTIMATE);
    backward_ = fftw_plan_dft_c2r(d, dims.data(), spec_, real_, FFTW_ESTIMATE);
  }

  SpectralOperator(const SpectralOperator&) = delete;
  SpectralOperator& operator=(const SpectralOperator&) = delete;

  ~SpectralOperator()
  {
    std::lock_guard<std::mutex> lock(detail::fftw_planner_mutex());
    fftw_destroy_plan(forward_);
    fftw_destroy_plan(backward_);
    fftw_free(real_);
    fftw_free(spec_);
  }

  const SpectralGrid& grid() const { return grid_; }
  /// psi(p_k) on the half spectrum (last axis 0..N/2).
  std::span<const double> multiplier() const { return multiplier_; }

  /// E(f, f) from the DFT of f.
  double energy(std::span<const double> f)
  {
    check(f);
    std::copy(f.begin(), f.end(), real_);
    fftw_execute(forward_);
    double s = 0.0;
    for (std::size_t k = 0; k < n_complex_; ++k)
      s += weight_[k] * multiplier_[k] * (spec_[k][0] * spec_[k][0] + spec_[k][1] * spec_[k][1]);
    return grid_.cell_volume() / static_cast<double>(n_real_) * s;
  }

  /// out = m(D) f for the Fourier multiplier m(psi) applied to psi(p_k).
  template <class M>
  void apply_multiplier(std::span<const double> f, std::span<double> out, M&& m)
  {
    check(f);
    check(out);
    std::copy(f.begin(), f.end(), real_);
    fftw_execute(forward_);
    const double inv = 1.0 / static_cast<double>(n_real_);
    for (std::size_t k = 0; k < n_complex_; ++k) {
      const double g = m(multiplier_[k]) * inv;
      spec_[k][0] *= g;
      spec_[k][1] *= g;
    }
    fftw_execute(backward_);
    std::copy(real_, real_ + n_real_, out.begin());
  }

  /// out = psi(D) f.
  void apply(std::span<const double> f, std::span<double> out)
  {
    apply_multiplier(f, out, [](double psi) { return psi; });
  }

private:
  void check(std::span<const double> f) const
  {
    if (f.size() != n_real_)
      throw std::invalid_argument("SpectralOperator: array does not match the grid");
  }

  SpectralGrid grid_;
  std::size_t n_real_ = 0;
  std::size_t n_complex_ = 0;
  std::vector<double> multiplier_;
  std::vector<double> weight_;
  double* real_ = nullptr;
  fftw_complex* spec_ = nullptr;
  fftw_plan forward_ = nullptr;
  fftw_plan backward_ = nullptr;
};

/// Discrete E(f, f) on the grid.
inline double energy(const StableSpec& spec, const SpectralGrid& grid, std::span<const double> f)
{
  SpectralOperator op(spec, grid);
  return op.energy(f);
}

inline double grid_inner(const SpectralGrid& grid, std::span<const double> a, std::span<const double> b)
{
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    s += a[i] * b[i];
  return grid.cell_volume() * s;
}

inline double l2_norm(const SpectralGrid& grid, std::span<const double> f) { return std::sqrt(grid_inner(grid, f, f)); }

/// ||f||_4^2 = (int f^4)^{1/2}.
inline double l4_norm_sq(const SpectralGrid& grid, std::span<const double> f)
{
  double s = 0.0;
  for (double x : f)
    s += x * x * x * x;
  return std::sqrt(grid.cell_volume() * s);
}

/// The objective J(f) = lambda ||f||_4^2 - E(f, f) with its L^2 gradient
/// G = 2 lambda f^3 / ||f||_4^2 - 2 psi(D) f (so dJ = <G, df> = h^d sum G_j df_j).
class Objective {
public:
  Objective(const StableSpec& spec, const SpectralGrid& grid, double lambda)
      : op_(spec, grid), lambda_(lambda), psi_f_(grid.size())
  {
  }

  SpectralOperator& op() { return op_; }
  const SpectralGrid& grid() const { return op_.grid(); }
  double lambda() const { return lambda_; }

  struct Value {
    double objective = 0.0;
    double l4_sq = 0.0;
    double energy = 0.0;
  };

  Value value(std::span<const double> f)
  {
    op_.apply(f, psi_f_);
    return {lambda_ * l4_norm_sq(grid(), f) - grid_inner(grid(), f, psi_f_), l4_norm_sq(grid(), f),
            grid_inner(grid(), f, psi_f_)};
  }

  Value value_and_gradient(std::span<const double> f, std::span<double> grad)
  {
    const Value v = value(f);
    const double c = 2.0 * lambda_ / v.l4_sq;
    for (std::size_t i = 0; i < f.size(); ++i)
      grad[i] = c * f[i] * f[i] * f[i] - 2.0 * psi_f_[i];
    return v;
  }

private:
  SpectralOperator op_;
  double lambda_;
  std::vector<double> psi_f_;
};

// ---------------------------------------------------------------------------
// Gaussian trial family and the derived constants.

/// Best member of the family f(x) = (2 pi s^2)^{-d/4} exp(-|x|^2 / (4 s^2)):
/// J(s) = lambda A s^{-d/2} - C s^{-beta} with A = (4 pi)^{-d/4} and
/// C = 2^{-beta} E psi(Z), Z standard normal. The maximizer is
/// s* = (2 beta C / (d lambda A))^{1 / (beta - d/2)} and J(s*) = lambda A s*^{-d/2} (1 - d / (2 beta)) > 0.
struct GaussianTrial {
  double width = 0.0;
  double value = 0.0;
};

inline double gaussian_energy_constant(const StableSpec& spec)
{
  const double b = spec.beta;
  double moment = 0.0;
  if (spec.family == Family::isotropic) {
    moment = spec.coeffs[0] * std::pow(2.0, 0.5 * b) * std::tgamma(0.5 * (spec.dim + b)) / std::tgamma(0.5 * spec.dim);
  } else {
    const double one = std::pow(2.0, 0.5 * b) * std::tgamma(0.5 * (1.0 + b)) / std::sqrt(std::numbers::pi);
    for (double c : spec.coeffs)
      moment += c * one;
  }
  return std::pow(2.0, -b) * moment;
}

inline GaussianTrial gaussian_trial(const StableSpec& spec, double lambda)
{
  spec.validate();
  if (!(spec.beta > 0.5 * spec.dim))
    throw GateError("the variational problem needs beta > d/2");
  const double d = spec.dim;
  const double b = spec.beta;
  const double A = std::pow(4.0 * std::numbers::pi, -0.25 * d);
  const double C = gaussian_energy_constant(spec);
  const double s = std::pow(2.0 * b * C / (d * lambda * A), 1.0 / (b - 0.5 * d));
  return {s, lambda * A * std::pow(s, -0.5 * d) * (1.0 - d / (2.0 * b))};
}

/// M(lambda) = lambda^{2 beta / (2 beta - d)} M(1).
inline double lambda_exponent(const StableSpec& spec) { return 2.0 * spec.beta / (2.0 * spec.beta - spec.dim); }

/// kappa from M(1) = (2 beta - d)/d * (d kappa^2 / (2 beta))^{2 beta / (2 beta - d)}.
inline double kappa_from_M(const StableSpec& spec, double M1)
{
  if (!(M1 > 0.0))
    throw std::invalid_argument("kappa_from_M: M must be positive");
  const double d = spec.dim;
  const double b = spec.beta;
  if (!(b > 0.5 * d))
    throw GateError("kappa_from_M needs beta > d/2");
  return std::sqrt((2.0 * b / d) * std::pow(M1 * d / (2.0 * b - d), (2.0 * b - d) / (2.0 * b)));
}

inline double M_from_kappa(const StableSpec& spec, double kappa)
{
  const double d = spec.dim;
  const double b = spec.beta;
  return (2.0 * b - d) / d * std::pow(d * kappa * kappa / (2.0 * b), 2.0 * b / (2.0 * b - d));
}

/// K = (d / beta) ((2 beta - d) / (2 beta M))^{(2 beta - d) / d}.
inline double K_from_M(const StableSpec& spec, double M1)
{
  const double d = spec.dim;
  const double b = spec.beta;
  return d / b * std::pow((2.0 * b - d) / (2.0 * b * M1), (2.0 * b - d) / d);
}

/// a = 2^{beta/d - 1} K.
inline double a_from_K(const StableSpec& spec, double K) { return std::pow(2.0, spec.beta / spec.dim - 1.0) * K; }

// ---------------------------------------------------------------------------
// Solver.

struct VariationalOptions {
  double tol = 1e-8;
  int max_iter = 20000;
  /// Start widths in units of the optimal Gaussian-trial width.
  std::vector<double> start_widths{0.25, 0.5, 1.0, 2.0, 4.0};
  /// Threads for the multi-start; results do not depend on it.
  int workers = 1;
  /// Stop a start after this many steps without a new lowest gradient norm.
  int stall_limit = 500;
  /// Keep the objective value after every accepted step of the returned start.
  bool record_trace = false;
};

struct StartRecord {
  double width = 0.0; // absolute width of the Gaussian start
  double M_value = 0.0;
  double grad_norm = 0.0;
  int iterations = 0;
  bool converged = false;
};

struct VariationalSolution {
  std::vector<double> f_values;
  double lambda = 1.0;
  double M_value = 0.0;
  double kappa = 0.0;
  double K_value = 0.0;
  /// NaN when beta is outside the self-intersection range or the solve did not converge.
  double a_value = std::numeric_limits<double>::quiet_NaN();
  double grad_norm = 0.0;
  int iterations = 0;
  bool converged = false;
  SpectralGrid grid;
  double trial_width = 0.0;
  double trial_value = 0.0;
  std::vector<StartRecord> starts;
  std::vector<double> objective_trace;
};

/// Default grid for (spec, lambda), scaled by the optimal Gaussian-trial width s*:
/// d = 1: L = 128 s*, N = 8192; d = 2: L = 16 s*, N = 256; d = 3: L = 8 s*, N = 64.
/// `refine` multiplies N (a power of two) at fixed L.
inline SpectralGrid default_grid(const StableSpec& spec, double lambda, int refine = 1)
{
  const double s = gaussian_trial(spec, lambda).width;
  switch (spec.dim) {
  case 1:
    return {128.0 * s, 8192 * refine, 1};
  case 2:
    return {16.0 * s, 256 * refine, 2};
  default:
    return {8.0 * s, 64 * refine, 3};
  }
}

/// Grid with half-length L_units * s* and N points per axis.
inline SpectralGrid scaled_grid(const StableSpec& spec, double lambda, double L_units, int N)
{
  return {L_units * gaussian_trial(spec, lambda).width, N, spec.dim};
}

inline std::vector<double> gaussian_on_grid(const SpectralGrid& grid, double width)
{
  std::vector<double> f(grid.size());
  const int N = grid.N;
  for (std::size_t idx = 0; idx < f.size(); ++idx) {
    std::size_t rem = idx;
    double r2 = 0.0;
    for (int axis = 0; axis < grid.d; ++axis) {
      const double x = grid.coordinate(static_cast<int>(rem % static_cast<std::size_t>(N)));
      rem /= static_cast<std::size_t>(N);
      r2 += x * x;
    }
    f[idx] = std::exp(-r2 / (4.0 * width * width));
  }
  const double n = l2_norm(grid, f);
  for (double& x : f)
    x /= n;
  return f;
}

namespace detail {

struct AscentResult {
  std::vector<double> f;
  double M_value = 0.0;
  double grad_norm = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> trace;
};

inline void project_tangent(const SpectralGrid& grid, std::span<const double> f, std::span<double> v)
{
  const double c = grid_inner(grid, v, f);
  for (std::size_t i = 0; i < v.size(); ++i)
    v[i] -= c * f[i];
}

// Preconditioned nonlinear conjugate gradient (Polak-Ribiere+) on the unit L^2 sphere.
// Each trial point is |f + t dir| renormalized; steps follow Armijo backtracking.
// Near the optimum, J stalls at its rounding floor before the gradient reaches
// tol; a step is then still accepted when J drops by no more than the rounding
// level and the gradient norm decreases.
inline AscentResult ascend(const StableSpec& spec, const SpectralGrid& grid, double lambda, std::vector<double> f,
                           const VariationalOptions& opts)
{
  Objective obj(spec, grid, lambda);
  const std::size_t n = f.size();
  constexpr double unit_roundoff = std::numeric_limits<double>::epsilon();
  std::vector<double> grad(n), gp(n), r(n), r_prev(n), gp_prev(n), dir(n), dir_prev(n);
  std::vector<double> trial(n), trial_grad(n), trial_gp(n);

  auto v = obj.value_and_gradient(f, grad);
  const double mu = std::max(v.energy, 1e-300);
  auto precondition = [&](std::span<const double> g, std::span<double> out) {
    obj.op().apply_multiplier(g, out, [mu](double psi) { return mu / (mu + psi); });
  };
  auto projected = [&](std::span<const double> at, std::span<const double> g, std::span<double> out) {
    std::copy(g.begin(), g.end(), out.begin());
    project_tangent(grid, at, out);
    return l2_norm(grid, out);
  };

  AscentResult res;
  if (opts.record_trace)
    res.trace.push_back(v.objective);
  double gn = projected(f, grad, gp);
  double step = 1.0;
  bool have_prev = false;
  double best_gn = gn;
  int since_best = 0;
  int it = 0;
  for (; it < opts.max_iter; ++it) {
    if (gn < opts.tol || since_best > opts.stall_limit)
      break;
    precondition(gp, r);
    project_tangent(grid, f, r);
    std::copy(r.begin(), r.end(), dir.begin());
    if (have_prev) {
      double num = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        num += gp[i] * (r[i] - r_prev[i]);
      const double den = grid_inner(grid, gp_prev, r_prev);
      const double beta_pr = den > 0.0 ? std::max(0.0, grid.cell_volume() * num / den) : 0.0;
      project_tangent(grid, f, dir_prev);
      for (std::size_t i = 0; i < n; ++i)
        dir[i] = r[i] + beta_pr * dir_prev[i];
      if (grid_inner(grid, gp, dir) <= 0.0)
        std::copy(r.begin(), r.end(), dir.begin());
    }
    const double slope = grid_inner(grid, gp, dir);
    const double jtol = 64.0 * unit_roundoff * (std::abs(lambda * v.l4_sq) + std::abs(v.energy));

    step = std::min(2.0 * step, 1e4);
    bool accepted = false;
    Objective::Value tv;
    double tgn = 0.0;
    while (true) {
      for (std::size_t i = 0; i < n; ++i)
        trial[i] = std::abs(f[i] + step * dir[i]);
      const double nrm = l2_norm(grid, trial);
      for (double& x : trial)
        x /= nrm;
      tv = obj.value_and_gradient(trial, trial_grad);
      tgn = projected(trial, trial_grad, trial_gp);
      const bool armijo = tv.objective >= v.objective + 1e-4 * step * slope;
      // Below the rounding level of J only the gradient norm can still discriminate.
      const bool flat = std::abs(tv.objective - v.objective) <= jtol;
      if (armijo || (flat && tgn < gn)) {
        accepted = true;
        break;
      }
      if (step < 1e-14)
        break;
      step *= 0.5;
    }
    if (!accepted)
      break;
    std::swap(dir_prev, dir);
    std::swap(r_prev, r);
    std::swap(gp_prev, gp);
    have_prev = true;
    std::swap(f, trial);
    std::swap(grad, trial_grad);
    std::swap(gp, trial_gp);
    v = tv;
    gn = tgn;
    if (gn < best_gn) {
      best_gn = gn;
      since_best = 0;
    } else {
      ++since_best;
    }
    if (opts.record_trace)
      res.trace.push_back(v.objective);
  }
  res.f = std::move(f);
  res.M_value = v.objective;
  res.grad_norm = gn;
  res.iterations = it;
  res.converged = gn < opts.tol;
  return res;
}

} // namespace detail

/// Maximizes lambda ||f||_4^2 - E(f, f) over ||f||_2 = 1 from several Gaussian starts.
/// The best start wins: highest objective, objectives within 1e-12 relative counting as
/// equal, then lowest gradient norm, then start order.
inline VariationalSolution maximize_M(const StableSpec& spec, double lambda, const SpectralGrid& grid,
                                      const VariationalOptions& opts = {})
{
  spec.validate();
  grid.validate();
  if (!(spec.beta > 0.5 * spec.dim))
    throw GateError("the variational problem needs beta > d/2");
  if (!(lambda > 0.0))
    throw std::invalid_argument("maximize_M: lambda must be positive");
  if (grid.d != spec.dim)
    throw std::invalid_argument("maximize_M: grid dimension differs from spec");
  if (opts.start_widths.empty())
    throw std::invalid_argument("maximize_M: need at least one start");

  const auto trial = gaussian_trial(spec, lambda);
  const std::size_t m = opts.start_widths.size();
  std::vector<detail::AscentResult> results(m);
  auto run_one = [&](std::size_t i) {
    const double w = opts.start_widths[i] * trial.width;
    results[i] = detail::ascend(spec, grid, lambda, gaussian_on_grid(grid, w), opts);
  };
  if (opts.workers > 1) {
    std::vector<std::future<void>> jobs;
    std::size_t next = 0;
    while (next < m) {
      jobs.clear();
      for (int k = 0; k < opts.workers && next < m; ++k, ++next)
        jobs.push_back(std::async(std::launch::async, run_one, next));
      for (auto& j : jobs)
        j.get();
    }
  } else {
    for (std::size_t i = 0; i < m; ++i)
      run_one(i);
  }

  // Objectives equal to rounding level count as ties.
  std::size_t best = 0;
  for (std::size_t i = 1; i < m; ++i) {
    const auto& a = results[i];
    const auto& b = results[best];
    const double tie = 1e-12 * std::max(std::abs(a.M_value), std::abs(b.M_value));
    if (a.M_value > b.M_value + tie || (std::abs(a.M_value - b.M_value) <= tie && a.grad_norm < b.grad_norm))
      best = i;
  }

  VariationalSolution sol;
  sol.lambda = lambda;
  sol.grid = grid;
  sol.trial_width = trial.width;
  sol.trial_value = trial.value;
  for (std::size_t i = 0; i < m; ++i)
    sol.starts.push_back({opts.start_widths[i] * trial.width, results[i].M_value, results[i].grad_norm,
                          results[i].iterations, results[i].converged});
  auto& r = results[best];
  sol.M_value = r.M_value;
  sol.grad_norm = r.grad_norm;
  sol.iterations = r.iterations;
  sol.converged = r.converged;
  sol.f_values = std::move(r.f);
  sol.objective_trace = std::move(r.trace);
  const double M1 = sol.M_value * std::pow(lambda, -lambda_exponent(spec));
  sol.kappa = kappa_from_M(spec, M1);
  sol.K_value = K_from_M(spec, M1);
  if (spec.gamma_gate() && sol.converged)
    sol.a_value = a_from_K(spec, sol.K_value);
  return sol;
}

/// Large-deviation constant a_psi from M(1) on the default grid (refined by `refine`).
inline VariationalSolution a_psi(const StableSpec& spec, const VariationalOptions& opts = {}, int refine = 1)
{
  spec.require_gamma_gate();
  return maximize_M(spec, 1.0, default_grid(spec, 1.0, refine), opts);
}

} // namespace silt

#endif // SILT_VARIATIONAL_HPP
