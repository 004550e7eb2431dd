#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "silt/estimators.hpp"
#include "silt/extrapolation.hpp"
#include "silt/stats.hpp"

using namespace silt;

namespace {

// Every pair evaluated, no cutoff, plain summation.
double brute_self(const PathSample& p, double eps)
{
  const MollifierKernel k(eps, p.spec.dim);
  const auto w = trapezoid_weights(p.n_steps, p.dt());
  const auto d = static_cast<std::size_t>(p.spec.dim);
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    s += 0.5 * w[i] * w[i] * k.peak();
    for (std::size_t j = i + 1; j < p.size(); ++j) {
      double r2 = 0.0;
      for (std::size_t a = 0; a < d; ++a) {
        const double x = p.positions[i * d + a] - p.positions[j * d + a];
        r2 += x * x;
      }
      s += w[i] * w[j] * k.value_r2(r2);
    }
  }
  return s;
}

double brute_cross(const PathSample& x, const PathSample& y, double eps)
{
  const MollifierKernel k(eps, x.spec.dim);
  const auto wx = trapezoid_weights(x.n_steps, x.dt());
  const auto wy = trapezoid_weights(y.n_steps, y.dt());
  const auto d = static_cast<std::size_t>(x.spec.dim);
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t j = 0; j < y.size(); ++j) {
      double r2 = 0.0;
      for (std::size_t a = 0; a < d; ++a) {
        const double v = x.positions[i * d + a] - y.positions[j * d + a];
        r2 += v * v;
      }
      s += wx[i] * wy[j] * k.value_r2(r2);
    }
  return s;
}

// E f_eps(X_u) for the 1D Cauchy process with psi = |p|:
// (1/pi) int_0^inf exp(-u p - eps^2 p^2 / 2) dp = exp(u^2 / (2 eps^2)) erfc(u / (eps sqrt 2)) / (eps sqrt(2 pi)).
double cauchy_smoothed_density(double u, double eps)
{
  const double z = u / (eps * std::sqrt(2.0));
  return std::exp(z * z) * std::erfc(z) / (eps * std::sqrt(2.0 * std::numbers::pi));
}

// Time-domain expectation int_0^t (t - u) g(u) du by composite Simpson.
template <class G>
double time_domain_expectation(double t, G g, int n = 20000)
{
  const double h = t / n;
  double s = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double u = i * h;
    const double c = (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    s += c * (t - u) * g(u);
  }
  return s * h / 3.0;
}

} // namespace

TEST(Kernel, UnitMassSymmetricPositive)
{
  for (int d : {1, 2}) {
    const MollifierKernel k(0.3, d);
    const double h = 0.01;
    const int m = 400; // covers |x| <= 4 = 13 eps
    double mass = 0.0;
    if (d == 1) {
      for (int i = -m; i <= m; ++i)
        mass += k.value_r2((i * h) * (i * h)) * h;
    } else {
      for (int i = -m; i <= m; ++i)
        for (int j = -m; j <= m; ++j)
          mass += k.value_r2((i * h) * (i * h) + (j * h) * (j * h)) * h * h;
    }
    EXPECT_NEAR(mass, 1.0, 1e-8) << d;
  }
  const MollifierKernel k(0.5, 1);
  EXPECT_EQ(k.fourier_p2(0.0), 1.0);
  for (double p : {0.1, 1.0, 10.0, 100.0}) {
    EXPECT_GT(k.fourier_p2(p * p), 0.0 - 1e-300);
    EXPECT_LE(k.fourier_p2(p * p), 1.0);
  }
  EXPECT_THROW(MollifierKernel(0.0, 1), std::invalid_argument);
  EXPECT_THROW(MollifierKernel(0.1, 4), std::invalid_argument);
}

TEST(Kernel, HalfKernelConvolvesToKernel)
{
  const MollifierKernel k(0.4, 1);
  const double h = 0.004;
  const int m = 1000;
  double err = 0.0;
  for (int xi = -300; xi <= 300; xi += 5) {
    const double x = xi * h;
    double conv = 0.0;
    for (int i = -m; i <= m; ++i) {
      const double y = i * h;
      conv += k.half_value_r2(y * y) * k.half_value_r2((x - y) * (x - y)) * h;
    }
    err = std::max(err, std::abs(conv - k.value_r2(x * x)));
  }
  EXPECT_LT(err, 1e-6);
}

TEST(PairSums, SelfMatchesBruteForce)
{
  for (const auto& s : {isotropic(1, 0.8), isotropic(2, 1.5), separable(1.5, {1.0, 3.0}), isotropic(3, 1.8)}) {
    const auto p = sample_path(s, 1.0, 300, 17, 2);
    for (double eps : {0.02, 0.1, 0.5}) {
      const MollifierKernel k(eps, s.dim);
      const double fast = self_ilt_parts(p, k).triangle();
      const double slow = brute_self(p, eps);
      EXPECT_NEAR(fast, slow, 1e-12 * slow) << "d=" << s.dim << " eps=" << eps;
    }
  }
}

TEST(PairSums, CrossMatchesBruteForce)
{
  for (const auto& s : {isotropic(1, 0.8), isotropic(2, 1.5), isotropic(3, 1.8)}) {
    const auto x = sample_path(s, 1.0, 250, 3, 0);
    const auto y = sample_path(s, 0.7, 200, 3, 1);
    for (double eps : {0.05, 0.3}) {
      const double fast = mutual_ilt(x, y, MollifierKernel(eps, s.dim)).value;
      const double slow = brute_cross(x, y, eps);
      EXPECT_NEAR(fast, slow, 1e-12 * slow + 1e-300) << "d=" << s.dim << " eps=" << eps;
    }
  }
}

TEST(MutualIlt, SeparatedPathsVanish)
{
  const auto s = isotropic(1, 1.0);
  const double eps = 0.01;
  auto x = sample_path(s, 1.0, 200, 1, 0);
  // Use a path that stays put so the 100 eps separation is guaranteed.
  std::fill(x.positions.begin(), x.positions.end(), 0.0);
  auto y = x;
  for (double& v : y.positions)
    v += 100 * eps;
  EXPECT_LT(mutual_ilt(x, y, MollifierKernel(eps, 1)).value, 1e-8);
}

TEST(MutualIlt, SymmetricInArguments)
{
  const auto s = isotropic(2, 1.5);
  const auto x = sample_path(s, 1.0, 400, 5, 0);
  const auto y = sample_path(s, 1.0, 400, 5, 1);
  const MollifierKernel k(0.05, 2);
  EXPECT_NEAR(mutual_ilt(x, y, k).value, mutual_ilt(y, x, k).value, 1e-12 * mutual_ilt(x, y, k).value);
  EXPECT_THROW(mutual_ilt(x, sample_path(isotropic(2, 1.2), 1.0, 10, 1, 0), k), std::invalid_argument);
}

TEST(MutualIlt, ResolutionWarning)
{
  const auto s = isotropic(1, 0.8);
  const auto x = sample_path(s, 1.0, 64, 5, 0);
  const auto y = sample_path(s, 1.0, 64, 5, 1);
  EXPECT_TRUE(mutual_ilt(x, y, MollifierKernel(1e-4, 1)).resolution_warning);
  EXPECT_FALSE(mutual_ilt(x, y, MollifierKernel(0.1, 1)).resolution_warning);
}

TEST(SelfIlt, PositiveAndHalfSquare)
{
  for (const auto& s : {isotropic(1, 0.8), isotropic(2, 1.5)}) {
    const auto p = sample_path(s, 1.0, 1024, 8, 4);
    const MollifierKernel k(0.05, s.dim);
    const auto raw = self_ilt_raw(p, k);
    EXPECT_GE(raw.value, 0.0);
    EXPECT_FALSE(raw.centered);
    EXPECT_EQ(raw.n_steps, 1024);
    EXPECT_EQ(raw.stream_id, 4u);
    // The triangle carries the off-diagonal pairs and half the diagonal band, which is half the full square.
    EXPECT_NEAR(raw.value, 0.5 * full_square_ilt(p, k), 1e-12 * raw.value);
    const auto parts = self_ilt_parts(p, k);
    EXPECT_NEAR(parts.off_diagonal, 0.5 * (parts.full_square() - parts.diagonal_band), 1e-12 * parts.off_diagonal);
  }
  EXPECT_THROW(self_ilt_raw(sample_path(isotropic(1, 0.6), 1.0, 10, 1, 0), MollifierKernel(0.1, 1)), GateError);
}

TEST(SelfIlt, GridRefinement)
{
  // Coarse grid = every other point of the fine path, so both see the same trajectory.
  const auto s = isotropic(1, 0.8);
  const MollifierKernel k(0.1, 1);
  double fine_sum = 0.0, coarse_sum = 0.0;
  for (std::uint64_t r = 0; r < 10; ++r) {
    const auto fine = sample_path(s, 1.0, 2048, 21, r);
    PathSample coarse{s, 1.0, 1024, 21, r, {}};
    for (std::size_t i = 0; i < fine.size(); i += 2)
      coarse.positions.push_back(fine.positions[i]);
    fine_sum += self_ilt_raw(fine, k).value;
    coarse_sum += self_ilt_raw(coarse, k).value;
  }
  EXPECT_LT(std::abs(fine_sum - coarse_sum) / fine_sum, 0.05);
}

TEST(ExpectedSelfIlt, GaussianClosedForm)
{
  // d = 2, beta = 2: X_u + eps Z is centered Gaussian with variance 2u + eps^2 per coordinate,
  // E f_eps(X_u) = 1 / (2 pi (2u + eps^2)), and
  // int_0^t (t - u) / (2 pi (2u + eps^2)) du = [(t + e2/2) log(1 + 2t/e2) - t] / (4 pi).
  const auto s = isotropic(2, 2.0);
  for (double eps : {0.05, 0.2})
    for (double t : {0.5, 1.0, 3.0}) {
      const double e2 = eps * eps;
      const double exact = ((t + 0.5 * e2) * std::log1p(2.0 * t / e2) - t) / (4.0 * std::numbers::pi);
      EXPECT_NEAR(expected_self_ilt(s, t, MollifierKernel(eps, 2)) / exact, 1.0, 1e-9) << eps << " " << t;
    }
}

TEST(ExpectedSelfIlt, CauchyTimeDomain)
{
  const auto s = isotropic(1, 1.0);
  for (double eps : {0.05, 0.1, 0.5})
    for (double t : {0.3, 1.0}) {
      const double oracle = time_domain_expectation(t, [&](double u) { return cauchy_smoothed_density(u, eps); });
      EXPECT_NEAR(expected_self_ilt(s, t, MollifierKernel(eps, 1)) / oracle, 1.0, 1e-8) << eps << " " << t;
    }
}

TEST(ExpectedSelfIlt, SmallTimeBoundAndGrowth)
{
  const auto s = isotropic(1, 0.8);
  const MollifierKernel k(0.05, 1);
  for (double t : {1e-4, 1e-3, 1e-2, 0.1, 1.0}) {
    const double v = expected_self_ilt(s, t, k);
    EXPECT_GT(v, 0.0);
    EXPECT_LE(v, 0.5 * t * t * k.peak() * (1 + 1e-12));
  }
  EXPECT_NEAR(expected_self_ilt(s, 1e-5, k) / (0.5 * 1e-10 * k.peak()), 1.0, 1e-3);
  // O(t) growth: slopes (E(2t) - E(t)) / t settle down.
  std::vector<double> slope;
  for (double t : {1.0, 2.0, 4.0})
    slope.push_back((expected_self_ilt(s, 2 * t, k) - expected_self_ilt(s, t, k)) / t);
  EXPECT_LT(std::abs(slope[2] - slope[1]), std::abs(slope[1] - slope[0]));
  EXPECT_TRUE(std::isfinite(slope[2]));
  EXPECT_THROW(expected_self_ilt(s, 0.0, k), std::invalid_argument);
}

TEST(ExpectedSelfIlt, SeparableAgainstIsotropicReduction)
{
  // Separable with equal coefficients and beta = 2 is the isotropic Gaussian.
  const MollifierKernel k(0.1, 2);
  EXPECT_NEAR(expected_self_ilt(separable(2.0, {1.0, 1.0}), 1.0, k) / expected_self_ilt(isotropic(2, 2.0), 1.0, k), 1.0,
              1e-9);
}

TEST(ExpectedRectIlt, InclusionExclusionOfTriangles)
{
  // int_a^b int_c^d g(s - r) ds dr = G(d - a) - G(c - a) - G(d - b) + G(c - b), G = triangle mean.
  for (const auto& s : {isotropic(1, 0.8), isotropic(2, 1.5)}) {
    const MollifierKernel k(0.05, s.dim);
    const TimeRect b{0.1, 0.35, 0.5, 0.9};
    auto G = [&](double t) { return t > 0.0 ? expected_self_ilt(s, t, k) : 0.0; };
    const double via_triangles =
        G(b.s_hi - b.r_lo) - G(b.s_lo - b.r_lo) - G(b.s_hi - b.r_hi) + G(b.s_lo - b.r_hi);
    EXPECT_NEAR(expected_rect_ilt(s, b, k) / via_triangles, 1.0, 1e-8);
    // Touching the diagonal.
    const TimeRect c{0.0, 0.5, 0.5, 1.0};
    EXPECT_NEAR(expected_rect_ilt(s, c, k) / (G(1.0) - 2.0 * G(0.5)), 1.0, 1e-8);
  }
}

TEST(GammaOnCell, ZeroAreaAndTriangleIdentity)
{
  const auto s = isotropic(1, 0.8);
  const auto p = sample_path(s, 1.0, 1024, 2, 0);
  const MollifierKernel k(0.05, 1);
  EXPECT_EQ(gamma_on_cell(p, TimeRect{0.2, 0.2, 0.5, 0.9}, k).value, 0.0);
  EXPECT_EQ(gamma_on_cell(p, TimeTriangle{1.0}, k).value, gamma_regularized(p, k).value);
  EXPECT_TRUE(gamma_on_cell(p, TimeTriangle{1.0}, k).centered);
  EXPECT_THROW(gamma_on_cell(p, TimeRect{0.0, 0.5, 0.5, 1.5}, k), std::invalid_argument);
  EXPECT_THROW(gamma_on_cell(p, TimeRect{0.0, 0.6, 0.5, 1.0}, k), std::invalid_argument);
}

TEST(GammaOnCell, FirstCellCentered)
{
  const auto s = isotropic(1, 0.8);
  const MollifierKernel k(0.1, 1);
  const auto cell = DyadicCell{1, 1}.rect();
  const double mean = expected_rect_ilt(s, cell, k);
  std::vector<double> v;
  for (std::uint64_t r = 0; r < 2000; ++r) {
    const auto p = sample_path(s, 1.0, 256, 31, r);
    v.push_back(gamma_on_cell(p, cell, k).value);
  }
  const auto ms = stats::mean_se(v);
  EXPECT_LT(std::abs(ms.z_score(0.0)), 3.0) << ms.mean << " +- " << ms.std_error << " (mean " << mean << ")";
}

TEST(Dyadic, CellsCountsAndAreas)
{
  const auto one = dyadic_cells(1);
  ASSERT_EQ(one.size(), 1u);
  const auto r = one[0].rect();
  EXPECT_EQ(r.r_lo, 0.0);
  EXPECT_EQ(r.r_hi, 0.5);
  EXPECT_EQ(r.s_lo, 0.5);
  EXPECT_EQ(r.s_hi, 1.0);
  EXPECT_EQ(dyadic_cells(4).size(), 15u);
  for (int N = 1; N <= 12; ++N) {
    const auto cells = dyadic_cells(N);
    EXPECT_EQ(cells.size(), (1u << N) - 1);
    double area = 0.0;
    std::vector<int> per_level(static_cast<std::size_t>(N) + 1, 0);
    for (const auto& c : cells) {
      const auto b = c.rect();
      area += b.area();
      ++per_level[static_cast<std::size_t>(c.level)];
      EXPECT_LE(b.r_hi, b.s_lo);
      EXPECT_GE(b.r_lo, 0.0);
      EXPECT_LE(b.s_hi, 1.0);
    }
    EXPECT_EQ(area, (1.0 - std::ldexp(1.0, -N)) / 2.0);
    for (int n = 1; n <= N; ++n)
      EXPECT_EQ(per_level[static_cast<std::size_t>(n)], 1 << (n - 1));
  }
  // Pairwise disjoint interiors.
  const auto cells = dyadic_cells(6);
  for (std::size_t i = 0; i < cells.size(); ++i)
    for (std::size_t j = i + 1; j < cells.size(); ++j) {
      const auto a = cells[i].rect(), b = cells[j].rect();
      const bool overlap = a.r_lo < b.r_hi && b.r_lo < a.r_hi && a.s_lo < b.s_hi && b.s_lo < a.s_hi;
      EXPECT_FALSE(overlap);
    }
  EXPECT_THROW(dyadic_cells(0), std::invalid_argument);
}

TEST(Dyadic, PartitionReproducesDirectSum)
{
  for (const auto& s : {isotropic(1, 0.8), isotropic(2, 1.5)}) {
    const MollifierKernel k(0.05, s.dim);
    const auto means = dyadic_means(s, k, 8);
    for (std::uint64_t r = 0; r < 5; ++r) {
      const auto p = sample_path(s, 1.0, 1024, 12, r);
      const auto dec = dyadic_decompose(p, k, means);
      EXPECT_EQ(dec.cells.size(), 255u);
      const double direct = gamma_regularized(p, k).value;
      EXPECT_EQ(dec.direct.value, direct);
      const double scale = std::max(std::abs(direct), expected_self_ilt(s, 1.0, k));
      EXPECT_LT(std::abs(dec.partition_sum() - direct), 1e-10 * scale);
    }
  }
  EXPECT_THROW(dyadic_decompose(sample_path(isotropic(1, 0.8), 2.0, 64, 1, 0), MollifierKernel(0.1, 1), 2),
               std::invalid_argument);
}

TEST(Extrapolation, RecoversPowerModel)
{
  const std::vector<double> eps{0.1, 0.05, 0.025, 0.0125};
  std::vector<double> v;
  for (double e : eps)
    v.push_back(5.0 + 2.0 * std::sqrt(e));
  const auto x = extrapolate_epsilon(eps, v);
  ASSERT_TRUE(x.converged);
  EXPECT_NEAR(x.value, 5.0, 1e-6);
  EXPECT_NEAR(x.rate, 0.5, 1e-9);
  EXPECT_NEAR(x.amplitude, 2.0, 1e-6);
  EXPECT_LT(x.error_bar, 1e-6);
  // Increasing ladders are accepted too.
  std::vector<double> re(eps.rbegin(), eps.rend()), rv(v.rbegin(), v.rend());
  EXPECT_NEAR(extrapolate_epsilon(re, rv).value, 5.0, 1e-6);
}

TEST(Extrapolation, ConstantLadder)
{
  const std::vector<double> eps{0.1, 0.05, 0.025};
  const std::vector<double> v{1.25, 1.25, 1.25};
  const auto x = extrapolate_epsilon(eps, v);
  EXPECT_TRUE(x.converged);
  EXPECT_EQ(x.value, 1.25);
  EXPECT_EQ(x.amplitude, 0.0);
}

TEST(Extrapolation, RejectsAndFlags)
{
  EXPECT_THROW(extrapolate_epsilon(std::vector<double>{0.1, 0.05}, std::vector<double>{1, 2}), std::invalid_argument);
  EXPECT_THROW(extrapolate_epsilon(std::vector<double>{0.1, 0.2, 0.05}, std::vector<double>{1, 2, 3}),
               std::invalid_argument);
  // Differences growing as eps shrinks: rate <= 0.
  const std::vector<double> eps{0.1, 0.05, 0.025};
  const auto grow = extrapolate_epsilon(eps, std::vector<double>{1.0, 2.0, 4.0});
  EXPECT_FALSE(grow.converged);
  EXPECT_TRUE(std::isnan(grow.value));
  const auto zigzag = extrapolate_epsilon(eps, std::vector<double>{1.0, 2.0, 1.5});
  EXPECT_FALSE(zigzag.converged);
}

TEST(Extrapolation, LadderDifferencesShrinkOnAverage)
{
  // Cauchy-in-eps diagnostic: mean |gamma_eps - gamma_eps'| over paths falls along the ladder.
  // At beta = 0.8 the decay is too slow to resolve on this ladder; beta = 1 shows it.
  const auto s = isotropic(1, 1.0);
  const std::vector<double> eps{0.1, 0.05, 0.025, 0.0125};
  std::vector<double> expected;
  for (double e : eps)
    expected.push_back(expected_self_ilt(s, 1.0, MollifierKernel(e, 1)));
  std::vector<double> mean_diff(eps.size() - 1, 0.0);
  const int paths = 200;
  for (int r = 0; r < paths; ++r) {
    const auto p = sample_path(s, 1.0, 4096, 77, static_cast<std::uint64_t>(r));
    const auto g = gamma_regularized_ladder(p, eps, expected);
    for (std::size_t k = 0; k + 1 < g.size(); ++k)
      mean_diff[k] += std::abs(g[k].value - g[k + 1].value) / paths;
  }
  std::vector<double> le, ld;
  for (std::size_t k = 0; k < mean_diff.size(); ++k) {
    le.push_back(std::log(eps[k]));
    ld.push_back(std::log(mean_diff[k]));
  }
  EXPECT_GT(stats::line_fit(le, ld).slope, 0.0);
}
