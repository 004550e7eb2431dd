#ifndef SILT_STABLE_SPEC_HPP
#define SILT_STABLE_SPEC_HPP

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace silt {

/// Raised when a spec falls outside the (d, beta) range an operation needs.
class GateError : public std::domain_error {
public:
  using std::domain_error::domain_error;
};

enum class Family { isotropic, separable };

inline std::string_view to_string(Family f) noexcept
{
  return f == Family::isotropic ? "isotropic" : "separable";
}

inline Family family_from_string(std::string_view s)
{
  if (s == "isotropic")
    return Family::isotropic;
  if (s == "separable")
    return Family::separable;
  throw std::invalid_argument("unknown family '" + std::string(s) + "' (expected isotropic or separable)");
}

/// Symmetric beta-stable model on R^d with characteristic exponent
///   isotropic:  psi(p) = c |p|^beta
///   separable:  psi(p) = sum_i c_i |p_i|^beta
/// so that E exp(i p.X_t) = exp(-t psi(p)).
struct StableSpec {
  int dim = 1;
  double beta = 1.0;
  Family family = Family::isotropic;
  std::vector<double> coeffs{1.0};

  /// Throws std::invalid_argument on a malformed spec.
  void validate() const
  {
    if (dim < 1 || dim > 3)
      throw std::invalid_argument("dim must be 1, 2 or 3, got " + std::to_string(dim));
    if (!(beta > 0.0 && beta <= 2.0))
      throw std::invalid_argument("beta must lie in (0, 2], got " + std::to_string(beta));
    const std::size_t want = family == Family::isotropic ? 1u : static_cast<std::size_t>(dim);
    if (coeffs.size() != want)
      throw std::invalid_argument("family " + std::string(to_string(family)) + " in dim " + std::to_string(dim) +
                                  " needs " + std::to_string(want) + " coefficient(s), got " +
                                  std::to_string(coeffs.size()));
    for (double c : coeffs)
      if (!(c > 0.0) || !std::isfinite(c))
        throw std::invalid_argument("coefficients must be positive and finite");
  }

  /// Scale coefficient of coordinate i (the shared scale in the isotropic case).
  double coeff(int i) const { return family == Family::isotropic ? coeffs[0] : coeffs[static_cast<std::size_t>(i)]; }

  double min_coeff() const { return *std::min_element(coeffs.begin(), coeffs.end()); }
  double max_coeff() const { return *std::max_element(coeffs.begin(), coeffs.end()); }

  /// Constants with lower_bound |p|^beta <= psi(p) <= upper_bound |p|^beta.
  /// Separable: sum |p_i|^beta >= |p|^beta because x^{beta/2} is subadditive for beta <= 2,
  /// and each |p_i|^beta <= |p|^beta gives the factor d above.
  double lower_bound() const { return family == Family::isotropic ? coeffs[0] : min_coeff(); }
  double upper_bound() const { return family == Family::isotropic ? coeffs[0] : dim * max_coeff(); }

  /// d/beta, the exponent that recurs in every scaling relation.
  double d_over_beta() const { return static_cast<double>(dim) / beta; }

  /// Renormalized self-intersection local time exists iff 2d/3 < beta <= d.
  bool gamma_gate() const { return beta > 2.0 * dim / 3.0 && beta <= static_cast<double>(dim); }
  /// Mutual intersection local time (finite mean) needs d/2 < beta <= d.
  bool alpha_gate() const { return beta > dim / 2.0 && beta <= static_cast<double>(dim); }

  void require_gamma_gate() const
  {
    if (!gamma_gate())
      throw GateError("self-intersection functionals need 2d/3 < beta <= d (d=" + std::to_string(dim) +
                      ", beta=" + std::to_string(beta) + ")");
  }
  void require_alpha_gate() const
  {
    if (!alpha_gate())
      throw GateError("mutual intersection functionals need d/2 < beta <= d (d=" + std::to_string(dim) +
                      ", beta=" + std::to_string(beta) + ")");
  }

  friend bool operator==(const StableSpec&, const StableSpec&) = default;
};

inline StableSpec isotropic(int dim, double beta, double c = 1.0)
{
  StableSpec s{dim, beta, Family::isotropic, {c}};
  s.validate();
  return s;
}

inline StableSpec separable(double beta, std::vector<double> coeffs)
{
  StableSpec s{static_cast<int>(coeffs.size()), beta, Family::separable, std::move(coeffs)};
  s.validate();
  return s;
}

/// psi(lambda). Total: any lambda of length spec.dim.
inline double psi_eval(const StableSpec& spec, std::span<const double> lambda)
{
  if (lambda.size() != static_cast<std::size_t>(spec.dim))
    throw std::invalid_argument("psi_eval: point has wrong dimension");
  if (spec.family == Family::isotropic) {
    double r2 = 0.0;
    for (double x : lambda)
      r2 += x * x;
    return r2 == 0.0 ? 0.0 : spec.coeffs[0] * std::pow(r2, 0.5 * spec.beta);
  }
  double s = 0.0;
  for (std::size_t i = 0; i < lambda.size(); ++i)
    if (lambda[i] != 0.0)
      s += spec.coeffs[i] * std::pow(std::abs(lambda[i]), spec.beta);
  return s;
}

inline double psi_eval(const StableSpec& spec, std::initializer_list<double> lambda)
{
  return psi_eval(spec, std::span<const double>(lambda.begin(), lambda.size()));
}

} // namespace silt

#endif // SILT_STABLE_SPEC_HPP
