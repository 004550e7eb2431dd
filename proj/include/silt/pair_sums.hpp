#ifndef SILT_PAIR_SUMS_HPP
#define SILT_PAIR_SUMS_HPP

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "silt/kernel.hpp"

// Weighted Gaussian pair sums
//
//   self:  S_k = sum_{i<j} w_i w_j exp(-|x_i - x_j|^2 / (2 eps_k^2))
//   cross: S_k = sum_{i,j} u_i v_j exp(-|a_i - b_j|^2 / (2 eps_k^2))
//
// for a ladder of eps_k. Pairs with |x_i - x_j| > cutoff_factor * eps_k are
// skipped (each skipped term is below 1.3e-14 of the peak). Candidates come from
// a sorted sweep in d = 1 and from a cell list of side cutoff_factor * eps_k in
// d = 2, 3. The exponentials of one candidate batch are evaluated together with
// Eigen's vectorized exp. Summation order depends only on the input data.

namespace silt::pairs {

/// Points x_0..x_{n-1} in R^dim with one weight each.
struct WeightedPoints {
  std::span<const double> coords;  // n * dim, row-major
  std::span<const double> weights; // n
  int dim = 1;

  std::size_t size() const { return weights.size(); }
};

namespace detail {

using Vec = Eigen::ArrayXd;
using ConstMap = Eigen::Map<const Eigen::ArrayXd>;

inline void check_eps(std::span<const double> eps)
{
  if (eps.empty())
    throw std::invalid_argument("pair sums need at least one epsilon");
  for (double e : eps)
    if (!(e > 0.0) || !std::isfinite(e))
      throw std::invalid_argument("pair sums need positive epsilons");
}

struct Sorted1d {
  std::vector<double> x;
  std::vector<double> w;
};

inline Sorted1d sort_1d(const WeightedPoints& p)
{
  std::vector<std::uint32_t> idx(p.size());
  std::iota(idx.begin(), idx.end(), 0u);
  std::sort(idx.begin(), idx.end(), [&](std::uint32_t a, std::uint32_t b) {
    return p.coords[a] < p.coords[b] || (p.coords[a] == p.coords[b] && a < b);
  });
  Sorted1d s;
  s.x.reserve(idx.size());
  s.w.reserve(idx.size());
  for (auto i : idx) {
    s.x.push_back(p.coords[i]);
    s.w.push_back(p.weights[i]);
  }
  return s;
}

// sum_j w_j exp(-(x_j - x0)^2 * inv) over j in [lo, hi).
inline double gaussian_row_1d(const Sorted1d& s, std::size_t lo, std::size_t hi, double x0, double inv)
{
  if (hi <= lo)
    return 0.0;
  const auto m = static_cast<Eigen::Index>(hi - lo);
  const ConstMap x(s.x.data() + lo, m);
  const ConstMap w(s.w.data() + lo, m);
  return (w * (-(x - x0).square() * inv).exp()).sum();
}

using CellKey = std::array<std::int64_t, 3>;

// Points sorted by the integer cell containing them; coordinates stored per axis.
struct CellList {
  int dim = 2;
  double side = 1.0;
  std::vector<CellKey> keys;
  std::array<std::vector<double>, 3> axis;
  std::vector<double> weights;

  CellKey key_of(const double* x) const
  {
    CellKey k{0, 0, 0};
    for (int j = 0; j < dim; ++j)
      k[static_cast<std::size_t>(j)] = static_cast<std::int64_t>(std::floor(x[j] / side));
    return k;
  }

  CellList(const WeightedPoints& p, double cell_side) : dim(p.dim), side(cell_side)
  {
    const std::size_t n = p.size();
    const auto d = static_cast<std::size_t>(dim);
    std::vector<CellKey> raw(n);
    for (std::size_t i = 0; i < n; ++i)
      raw[i] = key_of(p.coords.data() + i * d);
    std::vector<std::uint32_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0u);
    std::sort(idx.begin(), idx.end(), [&](std::uint32_t a, std::uint32_t b) {
      return raw[a] < raw[b] || (raw[a] == raw[b] && a < b);
    });
    keys.reserve(n);
    weights.reserve(n);
    for (auto i : idx) {
      keys.push_back(raw[i]);
      weights.push_back(p.weights[i]);
      for (std::size_t j = 0; j < d; ++j)
        axis[j].push_back(p.coords[i * d + j]);
    }
  }

  std::pair<std::size_t, std::size_t> cell_range(const CellKey& k) const
  {
    auto [lo, hi] = std::equal_range(keys.begin(), keys.end(), k);
    return {static_cast<std::size_t>(lo - keys.begin()), static_cast<std::size_t>(hi - keys.begin())};
  }

  // Calls fn(lo, hi) for each nonempty cell among the 3^dim around `center`, in a fixed order.
  template <class Fn>
  void for_neighbor_cells(const CellKey& center, Fn&& fn) const
  {
    const int reach2 = dim >= 2 ? 1 : 0;
    const int reach3 = dim >= 3 ? 1 : 0;
    for (int a = -1; a <= 1; ++a)
      for (int b = -reach2; b <= reach2; ++b)
        for (int c = -reach3; c <= reach3; ++c) {
          const CellKey k{center[0] + a, center[1] + b, center[2] + c};
          auto [lo, hi] = cell_range(k);
          if (lo < hi)
            fn(lo, hi);
        }
  }

  // sum_j w_j exp(-|x_j - x0|^2 * inv) over j in [lo, hi) with |x_j - x0|^2 <= cut2.
  double gaussian_row(std::size_t lo, std::size_t hi, const double* x0, double inv, double cut2) const
  {
    if (hi <= lo)
      return 0.0;
    const auto m = static_cast<Eigen::Index>(hi - lo);
    Vec r2 = Vec::Zero(m);
    for (int j = 0; j < dim; ++j)
      r2 += (ConstMap(axis[static_cast<std::size_t>(j)].data() + lo, m) - x0[j]).square();
    const ConstMap w(weights.data() + lo, m);
    return (r2 <= cut2).select(w * (-r2 * inv).exp(), 0.0).sum();
  }
};

} // namespace detail

/// Ladder of self sums over unordered pairs i < j (diagonal excluded).
inline std::vector<double> self_sums(const WeightedPoints& p, std::span<const double> eps)
{
  detail::check_eps(eps);
  std::vector<double> out(eps.size(), 0.0);
  const std::size_t n = p.size();
  if (n < 2)
    return out;

  if (p.dim == 1) {
    const auto s = detail::sort_1d(p);
    for (std::size_t k = 0; k < eps.size(); ++k) {
      const double cut = MollifierKernel::cutoff_factor * eps[k];
      const double inv = 0.5 / (eps[k] * eps[k]);
      double acc = 0.0;
      for (std::size_t a = 0; a + 1 < n; ++a) {
        const auto end = std::upper_bound(s.x.begin() + static_cast<std::ptrdiff_t>(a) + 1, s.x.end(), s.x[a] + cut);
        const auto hi = static_cast<std::size_t>(end - s.x.begin());
        acc += s.w[a] * detail::gaussian_row_1d(s, a + 1, hi, s.x[a], inv);
      }
      out[k] = acc;
    }
    return out;
  }

  for (std::size_t k = 0; k < eps.size(); ++k) {
    const double cut = MollifierKernel::cutoff_factor * eps[k];
    const double inv = 0.5 / (eps[k] * eps[k]);
    const detail::CellList cells(p, cut);
    double acc = 0.0;
    std::array<double, 3> xi{};
    for (std::size_t i = 0; i < n; ++i) {
      for (int j = 0; j < p.dim; ++j)
        xi[static_cast<std::size_t>(j)] = cells.axis[static_cast<std::size_t>(j)][i];
      double row = 0.0;
      cells.for_neighbor_cells(cells.keys[i], [&](std::size_t lo, std::size_t hi) {
        row += cells.gaussian_row(std::max(lo, i + 1), hi, xi.data(), inv, cut * cut);
      });
      acc += cells.weights[i] * row;
    }
    out[k] = acc;
  }
  return out;
}

/// Ladder of cross sums over all pairs (a_i, b_j).
inline std::vector<double> cross_sums(const WeightedPoints& a, const WeightedPoints& b, std::span<const double> eps)
{
  if (a.dim != b.dim)
    throw std::invalid_argument("cross_sums: point sets differ in dimension");
  detail::check_eps(eps);
  std::vector<double> out(eps.size(), 0.0);
  if (a.size() == 0 || b.size() == 0)
    return out;

  if (a.dim == 1) {
    const auto sa = detail::sort_1d(a);
    const auto sb = detail::sort_1d(b);
    for (std::size_t k = 0; k < eps.size(); ++k) {
      const double cut = MollifierKernel::cutoff_factor * eps[k];
      const double inv = 0.5 / (eps[k] * eps[k]);
      double acc = 0.0;
      std::size_t lo = 0;
      std::size_t hi = 0;
      for (std::size_t i = 0; i < sa.x.size(); ++i) {
        const double xa = sa.x[i];
        while (lo < sb.x.size() && sb.x[lo] < xa - cut)
          ++lo;
        hi = std::max(hi, lo);
        while (hi < sb.x.size() && sb.x[hi] <= xa + cut)
          ++hi;
        acc += sa.w[i] * detail::gaussian_row_1d(sb, lo, hi, xa, inv);
      }
      out[k] = acc;
    }
    return out;
  }

  const auto du = static_cast<std::size_t>(a.dim);
  for (std::size_t k = 0; k < eps.size(); ++k) {
    const double cut = MollifierKernel::cutoff_factor * eps[k];
    const double inv = 0.5 / (eps[k] * eps[k]);
    const detail::CellList cells(b, cut);
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double* xi = a.coords.data() + i * du;
      double row = 0.0;
      cells.for_neighbor_cells(cells.key_of(xi), [&](std::size_t lo, std::size_t hi) {
        row += cells.gaussian_row(lo, hi, xi, inv, cut * cut);
      });
      acc += a.weights[i] * row;
    }
    out[k] = acc;
  }
  return out;
}

} // namespace silt::pairs

#endif // SILT_PAIR_SUMS_HPP
