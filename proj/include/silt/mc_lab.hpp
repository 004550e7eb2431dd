#ifndef SILT_MC_LAB_HPP
#define SILT_MC_LAB_HPP

#include "json.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <condition_variable>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "silt/density.hpp"
#include "silt/estimators.hpp"
#include "silt/extrapolation.hpp"
#include "silt/io.hpp"
#include "silt/stats.hpp"

namespace silt {

// ---------------------------------------------------------------------------
// Ordered parallel map.

/// Runs work(i) for i in [first, first + n) on `workers` threads and hands each
/// result to sink(i, result) in increasing i, so anything the sink accumulates
/// is independent of the thread count and completion order.
template <class R, class Work, class Sink>
void ordered_parallel(std::size_t first, std::size_t n, int workers, Work&& work, Sink&& sink)
{
  if (n == 0)
    return;
  const auto threads = static_cast<std::size_t>(std::max(1, workers));
  if (threads == 1) {
    for (std::size_t i = first; i < first + n; ++i)
      sink(i, work(i));
    return;
  }
  std::vector<std::optional<R>> slots(n);
  std::atomic<std::size_t> next{0};
  std::mutex m;
  std::size_t emitted = 0;
  std::exception_ptr error;
  auto loop = [&] {
    while (true) {
      const std::size_t j = next.fetch_add(1);
      if (j >= n)
        return;
      std::optional<R> r;
      try {
        r.emplace(work(first + j));
      } catch (...) {
        std::lock_guard<std::mutex> lock(m);
        if (!error)
          error = std::current_exception();
        next.store(n);
        return;
      }
      std::lock_guard<std::mutex> lock(m);
      slots[j] = std::move(r);
      while (emitted < n && slots[emitted]) {
        if (!error) {
          try {
            sink(first + emitted, std::move(*slots[emitted]));
          } catch (...) {
            error = std::current_exception();
            next.store(n);
          }
        }
        slots[emitted].reset();
        ++emitted;
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < std::min(threads, n); ++t)
    pool.emplace_back(loop);
  for (auto& t : pool)
    t.join();
  if (error)
    std::rethrow_exception(error);
}

inline int default_workers()
{
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

// ---------------------------------------------------------------------------
// Ensembles of gamma_{t, eps}.

inline nlohmann::ordered_json spec_to_json(const StableSpec& s)
{
  nlohmann::ordered_json j;
  j["dim"] = s.dim;
  j["beta"] = s.beta;
  j["family"] = std::string(to_string(s.family));
  j["coeffs"] = s.coeffs;
  return j;
}

/// Raised when stored results were produced by a different configuration.
class ProvenanceError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct EnsembleConfig {
  StableSpec spec;
  double t_end = 1.0;
  int n_steps = 1024;
  std::vector<double> eps_ladder{0.1, 0.05, 0.025};
  std::uint64_t n_reps = 0;
  std::uint64_t seed = 0;
  /// Extrapolate each replicate's ladder to eps -> 0 (needs >= 3 ladder points).
  bool extrapolate = true;

  nlohmann::ordered_json to_json() const
  {
    nlohmann::ordered_json j;
    j["spec"] = spec_to_json(spec);
    j["t_end"] = t_end;
    j["n_steps"] = n_steps;
    j["eps_ladder"] = eps_ladder;
    j["n_reps"] = n_reps;
    j["seed"] = seed;
    j["extrapolate"] = extrapolate;
    return j;
  }

  std::string hash() const { return io::hex64(io::fnv1a64(to_json().dump())); }

  bool extrapolating() const { return extrapolate && eps_ladder.size() >= 3; }
  std::size_t rows_per_replicate() const { return eps_ladder.size() + (extrapolating() ? 1 : 0); }
};

struct Ensemble {
  EnsembleConfig config;
  std::string config_hash;
  /// E of the raw functional at each ladder eps.
  std::vector<double> expected;
  /// values[k][i]: gamma_{t, eps_i} of replicate k.
  std::vector<std::vector<double>> values;
  /// Per-replicate extrapolated value; NaN when the ladder was flagged non-convergent.
  std::vector<double> extrapolated;
  std::vector<std::pair<std::uint64_t, std::string>> failures;
  /// Replicates restored from an existing checkpoint file.
  std::size_t resumed = 0;

  std::size_t size() const { return values.size(); }

  std::vector<double> column(std::size_t ladder_id) const
  {
    std::vector<double> out;
    out.reserve(values.size());
    for (const auto& v : values)
      out.push_back(v.at(ladder_id));
    return out;
  }

  /// Ladder index of the smallest eps.
  std::size_t finest() const
  {
    return static_cast<std::size_t>(std::min_element(config.eps_ladder.begin(), config.eps_ladder.end()) -
                                    config.eps_ladder.begin());
  }
};

struct EnsembleRunOptions {
  int workers = 1;
  /// Checkpoint file (empty: keep results in memory only). An existing file with
  /// the same config hash is resumed; a different hash is a ProvenanceError.
  std::filesystem::path checkpoint;
};

namespace detail {

struct Replicate {
  std::vector<double> values;
  double extrapolated = std::numeric_limits<double>::quiet_NaN();
  std::string failure;
};

inline std::string ensemble_header(const EnsembleConfig& cfg)
{
  return "# silt-ensemble config_hash=" + cfg.hash() + " config=" + cfg.to_json().dump() +
         "\nstream_id,value,epsilon_ladder_id,n_steps\n";
}

inline std::string replicate_rows(const EnsembleConfig& cfg, std::uint64_t k, const Replicate& r)
{
  std::string s;
  const std::string tail = "," + std::to_string(cfg.n_steps) + "\n";
  for (std::size_t i = 0; i < r.values.size(); ++i)
    s += std::to_string(k) + "," + io::format_double(r.values[i]) + "," + std::to_string(i) + tail;
  if (cfg.extrapolating())
    s += std::to_string(k) + "," + io::format_double(r.extrapolated) + ",-1" + tail;
  return s;
}

// Reads complete replicates from a checkpoint and truncates any partial tail.
inline std::vector<Replicate> load_checkpoint(const EnsembleConfig& cfg, const std::filesystem::path& path)
{
  std::vector<Replicate> out;
  std::ifstream in(path, std::ios::binary);
  std::string line;
  if (!std::getline(in, line))
    return out;
  const std::string key = "config_hash=";
  const auto pos = line.find(key);
  if (line.rfind("# silt-ensemble", 0) != 0 || pos == std::string::npos)
    throw ProvenanceError("checkpoint " + path.string() + " has no provenance header");
  const std::string stored = line.substr(pos + key.size(), 16);
  if (stored != cfg.hash())
    throw ProvenanceError("checkpoint " + path.string() + " was produced by config " + stored + ", current config is " +
                          cfg.hash());
  std::uint64_t good_bytes = line.size() + 1;
  if (!std::getline(in, line))
    return out;
  good_bytes += line.size() + 1;

  const std::size_t per = cfg.rows_per_replicate();
  Replicate cur;
  std::size_t rows_in_cur = 0;
  std::uint64_t cur_bytes = 0;
  while (std::getline(in, line)) {
    if (in.eof())
      break; // no trailing newline: partial row
    const auto cells = io::split(line, ',');
    if (cells.size() != 4)
      break;
    const auto k = std::stoull(cells[0]);
    const int id = std::stoi(cells[2]);
    if (k != out.size())
      break;
    const double v = io::parse_double(cells[1]);
    if (id >= 0)
      cur.values.push_back(v);
    else
      cur.extrapolated = v;
    cur_bytes += line.size() + 1;
    if (++rows_in_cur == per) {
      out.push_back(std::move(cur));
      cur = {};
      rows_in_cur = 0;
      good_bytes += cur_bytes;
      cur_bytes = 0;
    }
  }
  in.close();
  if (std::filesystem::file_size(path) != good_bytes)
    std::filesystem::resize_file(path, good_bytes);
  return out;
}

} // namespace detail

/// n_reps replicates of gamma_{t_end, eps} over the ladder, replicate k on substream k.
inline Ensemble run_gamma_ensemble(const EnsembleConfig& cfg, const EnsembleRunOptions& opts = {})
{
  cfg.spec.validate();
  cfg.spec.require_gamma_gate();
  if (cfg.eps_ladder.empty())
    throw std::invalid_argument("run_gamma_ensemble: empty eps ladder");
  if (cfg.n_steps < 1 || !(cfg.t_end > 0.0))
    throw std::invalid_argument("run_gamma_ensemble: need n_steps >= 1 and t_end > 0");

  Ensemble ens;
  ens.config = cfg;
  ens.config_hash = cfg.hash();
  for (double e : cfg.eps_ladder)
    ens.expected.push_back(expected_self_ilt(cfg.spec, cfg.t_end, MollifierKernel(e, cfg.spec.dim)));

  auto accept = [&](std::uint64_t k, detail::Replicate&& r) {
    if (!r.failure.empty())
      ens.failures.emplace_back(k, r.failure);
    ens.values.push_back(std::move(r.values));
    ens.extrapolated.push_back(r.extrapolated);
  };

  std::ofstream file;
  if (!opts.checkpoint.empty()) {
    if (opts.checkpoint.has_parent_path())
      std::filesystem::create_directories(opts.checkpoint.parent_path());
    if (std::filesystem::exists(opts.checkpoint)) {
      auto done = detail::load_checkpoint(cfg, opts.checkpoint);
      if (done.size() > cfg.n_reps)
        done.resize(cfg.n_reps);
      for (std::size_t k = 0; k < done.size(); ++k)
        accept(k, std::move(done[k]));
      ens.resumed = ens.size();
    }
    file.open(opts.checkpoint, std::ios::binary | std::ios::app);
    if (!file)
      throw std::runtime_error("cannot open checkpoint " + opts.checkpoint.string());
    if (std::filesystem::file_size(opts.checkpoint) == 0) {
      file << detail::ensemble_header(cfg);
      file.flush();
    }
  }

  auto work = [&](std::uint64_t k) {
    detail::Replicate r;
    try {
      const auto path = sample_path(cfg.spec, cfg.t_end, cfg.n_steps, cfg.seed, k);
      for (const auto& g : gamma_regularized_ladder(path, cfg.eps_ladder, ens.expected))
        r.values.push_back(g.value);
      if (cfg.extrapolating())
        r.extrapolated = extrapolate_epsilon(cfg.eps_ladder, r.values).value;
    } catch (const std::exception& e) {
      r.values.assign(cfg.eps_ladder.size(), std::numeric_limits<double>::quiet_NaN());
      r.extrapolated = std::numeric_limits<double>::quiet_NaN();
      r.failure = e.what();
    }
    return r;
  };
  auto sink = [&](std::uint64_t k, detail::Replicate&& r) {
    if (file.is_open()) {
      file << detail::replicate_rows(cfg, k, r);
      file.flush();
    }
    accept(k, std::move(r));
  };
  const std::size_t start = ens.size();
  ordered_parallel<detail::Replicate>(start, cfg.n_reps - start, opts.workers, work, sink);
  return ens;
}

/// Reads a complete ensemble file written by run_gamma_ensemble.
inline Ensemble load_ensemble(const EnsembleConfig& cfg, const std::filesystem::path& path)
{
  Ensemble ens;
  ens.config = cfg;
  ens.config_hash = cfg.hash();
  for (auto& r : detail::load_checkpoint(cfg, path)) {
    ens.values.push_back(std::move(r.values));
    ens.extrapolated.push_back(r.extrapolated);
  }
  ens.resumed = ens.size();
  return ens;
}

// ---------------------------------------------------------------------------
// Tail fits.

struct TailOptions {
  std::vector<double> levels{0.1, 0.05, 0.02, 0.01, 0.005, 0.002, 0.001};
  std::size_t min_count = 20;
  std::size_t min_points = 4;
  std::size_t min_reps = 10000;
  double z = 1.959963984540054;
};

struct TailPoint {
  double level = 0.0;     // target survival probability
  double threshold = 0.0; // h
  std::size_t count = 0;  // #{samples >= h}
  double survival = 0.0;  // count / n
  double x = 0.0;         // transformed threshold
  double y = 0.0;         // -log survival
  double y_lo = 0.0;      // Wilson band on -log survival
  double y_hi = 0.0;
  bool used = false;
};

struct TailFit {
  std::string side;      // "upper" or "lower"
  std::string transform; // description of x(h)
  double exponent = std::numeric_limits<double>::quiet_NaN(); // power on h, NaN for the exponential map
  std::size_t n = 0;
  std::vector<TailPoint> points;
  double slope = std::numeric_limits<double>::quiet_NaN();
  double slope_se = std::numeric_limits<double>::quiet_NaN();
  double intercept = std::numeric_limits<double>::quiet_NaN();
  double band_lo = std::numeric_limits<double>::quiet_NaN();
  double band_hi = std::numeric_limits<double>::quiet_NaN();
  bool ok = false;
  std::string error;

  std::size_t usable() const
  {
    return static_cast<std::size_t>(std::count_if(points.begin(), points.end(), [](const auto& p) { return p.used; }));
  }
};

/// Weighted fit of -log P(Z >= h) against x(h) over empirical-quantile thresholds.
inline TailFit fit_tail(std::span<const double> samples, const std::function<double(double)>& transform,
                        const TailOptions& opts = {})
{
  TailFit fit;
  std::vector<double> sorted;
  for (double v : samples)
    if (!std::isnan(v))
      sorted.push_back(v);
  std::sort(sorted.begin(), sorted.end());
  fit.n = sorted.size();
  if (fit.n < opts.min_reps) {
    fit.error = "needs at least " + std::to_string(opts.min_reps) + " samples, got " + std::to_string(fit.n);
    return fit;
  }
  std::vector<double> xs, ys, ws;
  for (double level : opts.levels) {
    TailPoint p;
    p.level = level;
    p.threshold = stats::quantile_sorted(sorted, 1.0 - level);
    p.count = static_cast<std::size_t>(sorted.end() - std::lower_bound(sorted.begin(), sorted.end(), p.threshold));
    p.survival = static_cast<double>(p.count) / static_cast<double>(fit.n);
    p.x = transform(p.threshold);
    if (p.count > 0) {
      const auto ci = stats::wilson_interval(p.count, fit.n, opts.z);
      p.y = -std::log(p.survival);
      p.y_lo = -std::log(ci.hi);
      p.y_hi = -std::log(ci.lo);
    }
    p.used = p.count >= opts.min_count && std::isfinite(p.x);
    if (p.used) {
      const double sigma = (p.y_hi - p.y_lo) / (2.0 * opts.z);
      xs.push_back(p.x);
      ys.push_back(p.y);
      ws.push_back(1.0 / (sigma * sigma));
    }
    fit.points.push_back(p);
  }
  if (xs.size() < opts.min_points) {
    fit.error = "insufficient tail mass: " + std::to_string(xs.size()) + " usable thresholds, need " +
                std::to_string(opts.min_points);
    return fit;
  }
  try {
    const auto lf = stats::weighted_line_fit(xs, ys, ws);
    fit.slope = lf.slope;
    fit.slope_se = lf.slope_se;
    fit.intercept = lf.intercept;
    fit.band_lo = lf.slope - opts.z * lf.slope_se;
    fit.band_hi = lf.slope + opts.z * lf.slope_se;
    fit.ok = std::isfinite(fit.slope);
  } catch (const std::exception& e) {
    fit.error = e.what();
  }
  return fit;
}

/// Upper tail: -log P(gamma >= h) against h^{beta/d} (thresholds h <= 0 are unusable).
inline TailFit upper_tail_fit(std::span<const double> gamma, const StableSpec& spec, const TailOptions& opts = {})
{
  const double e = spec.beta / spec.dim;
  auto fit = fit_tail(
      gamma, [e](double h) { return h > 0.0 ? std::pow(h, e) : std::numeric_limits<double>::quiet_NaN(); }, opts);
  fit.side = "upper";
  fit.transform = "h^(beta/d)";
  fit.exponent = e;
  return fit;
}

/// Lower tail: -log P(-gamma >= h) against h^{beta/(d-beta)} (beta < d) or exp(h / p_1(0)) (beta = d).
inline TailFit lower_tail_fit(std::span<const double> gamma, const StableSpec& spec, const TailOptions& opts = {})
{
  std::vector<double> neg;
  neg.reserve(gamma.size());
  for (double v : gamma)
    neg.push_back(-v);
  TailFit fit;
  if (spec.beta < spec.dim) {
    const double e = spec.beta / (spec.dim - spec.beta);
    fit = fit_tail(
        neg, [e](double h) { return h > 0.0 ? std::pow(h, e) : std::numeric_limits<double>::quiet_NaN(); }, opts);
    fit.transform = "h^(beta/(d-beta))";
    fit.exponent = e;
  } else {
    const double p1 = density_at_zero(spec);
    fit = fit_tail(neg, [p1](double h) { return std::exp(h / p1); }, opts);
    fit.transform = "exp(h/p_1(0))";
  }
  fit.side = "lower";
  return fit;
}

inline TailFit upper_tail_fit(const Ensemble& ens, const TailOptions& opts = {})
{
  return upper_tail_fit(ens.column(ens.finest()), ens.config.spec, opts);
}

inline TailFit lower_tail_fit(const Ensemble& ens, const TailOptions& opts = {})
{
  return lower_tail_fit(ens.column(ens.finest()), ens.config.spec, opts);
}

// ---------------------------------------------------------------------------
// Mean of the mutual intersection local time.

struct AlphaMeanReport {
  StableSpec spec;
  double s = 1.0;
  double t = 1.0;
  double epsilon = 0.0;
  int n_steps = 0;
  std::uint64_t seed = 0;
  std::size_t n_reps = 0;
  double mc_mean = std::numeric_limits<double>::quiet_NaN();
  double std_error = std::numeric_limits<double>::quiet_NaN();
  double closed_form = std::numeric_limits<double>::quiet_NaN();
  double z_score = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> samples;
};

struct AlphaMeanOptions {
  int n_steps = 1024;
  double epsilon = 1e-4;
  int workers = 1;
};

/// Monte Carlo mean of alpha_{s,t,eps} for independent copies started at the origin,
/// pair k on substreams (2k, 2k + 1), against the exact mean of alpha_{s,t}.
inline AlphaMeanReport mean_check_alpha(const StableSpec& spec, double s, double t, std::size_t n_reps,
                                        std::uint64_t seed, const AlphaMeanOptions& opts = {})
{
  spec.require_alpha_gate();
  AlphaMeanReport rep;
  rep.spec = spec;
  rep.s = s;
  rep.t = t;
  rep.epsilon = opts.epsilon;
  rep.n_steps = opts.n_steps;
  rep.seed = seed;
  rep.n_reps = n_reps;
  rep.closed_form = alpha_mean_coincident(spec, s, t);
  const MollifierKernel kernel(opts.epsilon, spec.dim);
  ordered_parallel<double>(
      0, n_reps, opts.workers,
      [&](std::uint64_t k) {
        const auto x = sample_path(spec, s, opts.n_steps, seed, 2 * k);
        const auto y = sample_path(spec, t, opts.n_steps, seed, 2 * k + 1);
        return mutual_ilt(x, y, kernel).value;
      },
      [&](std::uint64_t, double v) { rep.samples.push_back(v); });
  const auto ms = stats::mean_se(rep.samples);
  rep.mc_mean = ms.mean;
  rep.std_error = ms.std_error;
  rep.z_score = ms.z_score(rep.closed_form);
  return rep;
}

struct ExponentialMoment {
  double theta = 0.0;
  double value = 0.0;         // mean of exp(theta alpha^{beta/d})
  double relative_error = 0.0; // standard error / value
};

/// Empirical E exp(theta alpha^{beta/d}) on a theta grid, plus the largest theta in
/// [0, theta_max] (found by bisection) at which the estimate stays finite with
/// relative standard error <= 0.25. Reported only; there is no reference value.
struct ExponentialMomentReport {
  std::vector<ExponentialMoment> grid;
  double theta_stable = 0.0;
};

inline ExponentialMomentReport exponential_moments(std::span<const double> alpha, const StableSpec& spec,
                                                   std::span<const double> thetas, double theta_max = 4.0)
{
  const double e = spec.beta / spec.dim;
  auto moment = [&](double theta) {
    std::vector<double> v;
    v.reserve(alpha.size());
    for (double a : alpha)
      v.push_back(std::exp(theta * std::pow(std::max(a, 0.0), e)));
    const auto ms = stats::mean_se(v);
    return ExponentialMoment{theta, ms.mean, ms.std_error / ms.mean};
  };
  auto stable = [&](double theta) {
    const auto m = moment(theta);
    return std::isfinite(m.value) && m.relative_error <= 0.25;
  };
  ExponentialMomentReport rep;
  for (double th : thetas)
    rep.grid.push_back(moment(th));
  if (stable(theta_max)) {
    rep.theta_stable = theta_max;
  } else {
    double lo = 0.0, hi = theta_max;
    for (int i = 0; i < 40; ++i) {
      const double mid = 0.5 * (lo + hi);
      (stable(mid) ? lo : hi) = mid;
    }
    rep.theta_stable = lo;
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Scaling law gamma_t = t^{2 - d/beta} gamma_1 in law.

struct ScalingReport {
  StableSpec spec;
  double t = 1.0;
  double exponent = 0.0;       // 2 - d/beta
  double wrong_exponent = 1.0; // negative control
  double epsilon = 0.0;        // regularization of the gamma_1 arm
  double epsilon_t = 0.0;      // t^{1/beta} eps for the gamma_t arm
  int n_steps = 0;
  std::size_t n_reps = 0;
  std::uint64_t seed = 0;
  stats::KsResult ks;
  stats::KsResult ks_wrong;
  std::vector<double> gamma_t;
  std::vector<double> gamma_1;
};

struct ScalingOptions {
  int n_steps = 1024;
  double epsilon = 0.05;
  int workers = 1;
  double wrong_exponent = 1.0;
};

/// Two independent arms: gamma_{t, t^{1/beta} eps} on streams [0, n) and gamma_{1, eps} on
/// streams [n, 2n), both with n_steps grid steps. Compares gamma_t with t^{2-d/beta} gamma_1,
/// and with t^{wrong_exponent} gamma_1 as a negative control.
inline ScalingReport scaling_test(const StableSpec& spec, double t, std::size_t n_reps, std::uint64_t seed,
                                  const ScalingOptions& opts = {})
{
  spec.require_gamma_gate();
  if (!(t > 0.0))
    throw std::invalid_argument("scaling_test: t must be positive");
  ScalingReport rep;
  rep.spec = spec;
  rep.t = t;
  rep.exponent = 2.0 - spec.d_over_beta();
  rep.wrong_exponent = opts.wrong_exponent;
  rep.epsilon = opts.epsilon;
  rep.epsilon_t = std::pow(t, 1.0 / spec.beta) * opts.epsilon;
  rep.n_steps = opts.n_steps;
  rep.n_reps = n_reps;
  rep.seed = seed;
  const MollifierKernel k1(rep.epsilon, spec.dim);
  const MollifierKernel kt(rep.epsilon_t, spec.dim);
  const double e1 = expected_self_ilt(spec, 1.0, k1);
  const double et = expected_self_ilt(spec, t, kt);
  auto arm = [&](std::uint64_t k) {
    const bool second = k >= n_reps;
    const double dur = second ? 1.0 : t;
    const auto path = sample_path(spec, dur, opts.n_steps, seed, k);
    const auto& kern = second ? k1 : kt;
    return self_ilt_raw(path, kern).value - (second ? e1 : et);
  };
  std::vector<double> all;
  ordered_parallel<double>(0, 2 * n_reps, opts.workers, arm, [&](std::uint64_t, double v) { all.push_back(v); });
  rep.gamma_t.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n_reps));
  rep.gamma_1.assign(all.begin() + static_cast<std::ptrdiff_t>(n_reps), all.end());
  if (n_reps == 0)
    return rep;
  std::vector<double> scaled, wrong;
  const double f = std::pow(t, rep.exponent);
  const double fw = std::pow(t, rep.wrong_exponent);
  for (double v : rep.gamma_1) {
    scaled.push_back(f * v);
    wrong.push_back(fw * v);
  }
  rep.ks = stats::ks_two_sample(rep.gamma_t, scaled);
  rep.ks_wrong = stats::ks_two_sample(rep.gamma_t, wrong);
  return rep;
}

// ---------------------------------------------------------------------------
// Law-of-the-iterated-logarithm trajectories.

/// t^{2-d/beta} (log log t)^{d/beta}.
inline double lil_upper_normalizer(const StableSpec& spec, double t)
{
  const double r = spec.d_over_beta();
  return std::pow(t, 2.0 - r) * std::pow(std::log(std::log(t)), r);
}

/// beta < d: t^{2-d/beta} (log log t)^{d/beta - 1};  beta = d: t log log log t.
inline double lil_lower_normalizer(const StableSpec& spec, double t)
{
  const double r = spec.d_over_beta();
  if (spec.beta < spec.dim)
    return std::pow(t, 2.0 - r) * std::pow(std::log(std::log(t)), r - 1.0);
  return t * std::log(std::log(std::log(t)));
}

struct LilPoint {
  double t = 0.0;
  double gamma = 0.0;
  double upper_normalizer = 0.0;
  double lower_normalizer = 0.0;
  double upper_ratio = 0.0; // gamma / upper normalizer
  double lower_ratio = 0.0; // gamma / lower normalizer
};

struct LilOptions {
  double epsilon = 1.0;
  int steps_per_unit = 16;
  double t_min = 16.0;
};

struct LilSeries {
  StableSpec spec;
  std::uint64_t seed = 0;
  std::uint64_t stream_id = 0;
  double epsilon = 0.0;
  int steps_per_unit = 0;
  std::vector<LilPoint> points;
};

/// gamma_{t, eps} along one path at geometric checkpoints in [t_min, t_max] (snapped to the grid).
inline LilSeries lil_trajectory(const StableSpec& spec, double t_max, int n_checkpoints, std::uint64_t seed,
                                std::uint64_t stream_id = 0, const LilOptions& opts = {})
{
  spec.require_gamma_gate();
  if (t_max > 1000.0 || !(t_max >= opts.t_min))
    throw std::invalid_argument("lil_trajectory: need t_min <= t_max <= 1000");
  if (n_checkpoints < 1)
    throw std::invalid_argument("lil_trajectory: need at least one checkpoint");
  const int n_steps = static_cast<int>(std::llround(t_max * opts.steps_per_unit));
  const double t_end = static_cast<double>(n_steps) / opts.steps_per_unit;
  const auto path = sample_path(spec, t_end, n_steps, seed, stream_id);
  const MollifierKernel kernel(opts.epsilon, spec.dim);
  LilSeries out{spec, seed, stream_id, opts.epsilon, opts.steps_per_unit, {}};
  int last_m = -1;
  for (int i = 0; i < n_checkpoints; ++i) {
    const double frac = n_checkpoints == 1 ? 1.0 : static_cast<double>(i) / (n_checkpoints - 1);
    const double target = opts.t_min * std::pow(t_end / opts.t_min, frac);
    const int m = static_cast<int>(std::llround(target * opts.steps_per_unit));
    if (m <= last_m)
      continue;
    last_m = m;
    LilPoint p;
    p.t = m * path.dt();
    p.gamma = gamma_on_cell(path, TimeTriangle{p.t}, kernel).value;
    p.upper_normalizer = lil_upper_normalizer(spec, p.t);
    p.lower_normalizer = lil_lower_normalizer(spec, p.t);
    p.upper_ratio = p.gamma / p.upper_normalizer;
    p.lower_ratio = p.gamma / p.lower_normalizer;
    out.points.push_back(p);
  }
  return out;
}

} // namespace silt

#endif // SILT_MC_LAB_HPP
