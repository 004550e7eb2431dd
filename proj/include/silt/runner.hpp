#ifndef SILT_RUNNER_HPP
#define SILT_RUNNER_HPP

#include <boost/version.hpp>
#include <Eigen/Core>
#include <fftw3.h>

#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "silt/config.hpp"
#include "silt/mc_lab.hpp"
#include "silt/variational.hpp"

namespace silt {

inline constexpr const char* version = "1.0.0";

enum ExitCode : int { exit_ok = 0, exit_validation = 1, exit_nonconvergence = 2 };

using json = nlohmann::ordered_json;

inline json to_json(const GammaEstimate& g)
{
  return json{{"value", g.value},   {"t_end", g.t_end},   {"epsilon", g.epsilon},       {"n_steps", g.n_steps},
              {"centered", g.centered}, {"stderr", g.std_error}, {"seed", g.seed}, {"stream_id", g.stream_id},
              {"resolution_warning", g.resolution_warning}};
}

inline json to_json(const TailFit& f)
{
  json pts = json::array();
  for (const auto& p : f.points)
    pts.push_back({{"level", p.level},
                   {"threshold", p.threshold},
                   {"count", p.count},
                   {"survival", p.survival},
                   {"x", p.x},
                   {"y", p.y},
                   {"y_lo", p.y_lo},
                   {"y_hi", p.y_hi},
                   {"used", p.used}});
  return json{{"side", f.side},         {"transform", f.transform}, {"exponent", f.exponent},
              {"n", f.n},               {"slope", f.slope},         {"slope_se", f.slope_se},
              {"intercept", f.intercept}, {"band_lo", f.band_lo},   {"band_hi", f.band_hi},
              {"usable_points", f.usable()}, {"ok", f.ok},          {"error", f.error},
              {"points", pts}};
}

inline json to_json(const stats::KsResult& k)
{
  return json{{"statistic", k.statistic}, {"p_value", k.p_value}, {"n1", k.n1}, {"n2", k.n2}};
}

inline json to_json(const VariationalSolution& s, const StableSpec& spec)
{
  json starts = json::array();
  for (const auto& st : s.starts)
    starts.push_back({{"width", st.width},
                      {"M_value", st.M_value},
                      {"grad_norm", st.grad_norm},
                      {"iterations", st.iterations},
                      {"converged", st.converged}});
  return json{{"beta", spec.beta},
              {"d", spec.dim},
              {"family", std::string(to_string(spec.family))},
              {"coeffs", spec.coeffs},
              {"lambda", s.lambda},
              {"M_value", s.M_value},
              {"M1", s.M_value * std::pow(s.lambda, -lambda_exponent(spec))},
              {"kappa", s.kappa},
              {"K_value", s.K_value},
              {"a_value", s.a_value},
              {"grad_norm", s.grad_norm},
              {"iterations", s.iterations},
              {"converged", s.converged},
              {"L", s.grid.L},
              {"N", s.grid.N},
              {"trial_width", s.trial_width},
              {"trial_value", s.trial_value},
              {"starts", starts}};
}

inline std::string versions_string()
{
  std::ostringstream s;
  s << "silt " << version << "; " << fftw_version << "; boost " << BOOST_LIB_VERSION << "; eigen "
    << EIGEN_WORLD_VERSION << "." << EIGEN_MAJOR_VERSION << "." << EIGEN_MINOR_VERSION << "; compiler "
#if defined(__clang__)
    << "clang " << __clang_version__;
#elif defined(__GNUC__)
    << "gcc " << __VERSION__;
#else
    << "unknown";
#endif
  return s.str();
}

struct RunOptions {
  int workers = 1;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
};

/// Writes artifacts into one directory and records their paths relative to the run root.
class ArtifactSink {
public:
  ArtifactSink(std::filesystem::path root, std::filesystem::path sub, const OutputBlock& out)
      : root_(std::move(root)), sub_(std::move(sub)), out_(out)
  {
  }

  std::filesystem::path dir() const { return root_ / sub_; }

  /// Writes `name` if its extension is among the requested formats.
  void write(const std::string& name, const std::string& text)
  {
    const auto ext = std::filesystem::path(name).extension().string();
    if (!ext.empty() && !out_.wants(ext.substr(1)))
      return;
    io::write_text(dir() / name, text);
    record(name);
  }

  void record(const std::string& name) { list.push_back((sub_ / name).generic_string()); }

  std::vector<std::string> list;

private:
  std::filesystem::path root_;
  std::filesystem::path sub_;
  OutputBlock out_;
};

struct ExperimentOutcome {
  bool nonconverged = false;
  std::vector<std::string> notes;
};

namespace detail {

inline SpectralGrid solver_grid(const ExperimentConfig& cfg, double lambda)
{
  const auto def = default_grid(cfg.spec, lambda);
  if (cfg.solver.L == 0.0 && cfg.solver.N == 0)
    return def;
  const double L = cfg.solver.L > 0.0 ? cfg.solver.L * gaussian_trial(cfg.spec, lambda).width : def.L;
  const int N = cfg.solver.N > 0 ? cfg.solver.N : def.N;
  return {L, N, cfg.spec.dim};
}

inline VariationalOptions solver_options(const ExperimentConfig& cfg, int workers)
{
  VariationalOptions o;
  o.tol = cfg.solver.tol;
  o.max_iter = cfg.solver.max_iter;
  o.workers = workers;
  return o;
}

inline EnsembleConfig ensemble_config(const ExperimentConfig& cfg)
{
  EnsembleConfig e;
  e.spec = cfg.spec;
  e.t_end = cfg.run.t_end;
  e.n_steps = cfg.run.n_steps;
  e.eps_ladder = cfg.run.eps_ladder;
  e.n_reps = cfg.run.n_reps;
  e.seed = cfg.run.seed;
  return e;
}

inline std::string fmt(double x) { return io::format_double(x); }

inline std::string dump(const json& j) { return j.dump(2) + "\n"; }

// ---------------------------------------------------------------------------
// Experiments.

inline ExperimentOutcome run_sample(const ExperimentConfig& cfg, int workers, ArtifactSink& out)
{
  const auto& r = cfg.run;
  const int d = cfg.spec.dim;
  io::CsvTable t;
  t.header = {"stream_id", "step", "t"};
  for (int i = 0; i < d; ++i)
    t.header.push_back("x" + std::to_string(i));
  ordered_parallel<PathSample>(
      0, r.n_reps, workers, [&](std::uint64_t k) { return sample_path(cfg.spec, r.t_end, r.n_steps, r.seed, k); },
      [&](std::uint64_t k, PathSample&& p) {
        for (std::size_t s = 0; s < p.size(); ++s) {
          std::vector<std::string> row{std::to_string(k), std::to_string(s), fmt(static_cast<double>(s) * p.dt())};
          const auto x = p.point(s);
          for (int i = 0; i < d; ++i)
            row.push_back(fmt(x[static_cast<std::size_t>(i)]));
          t.rows.push_back(std::move(row));
        }
      });
  out.write("paths.csv", t.str());
  return {};
}

inline ExperimentOutcome run_alpha_mean(const ExperimentConfig& cfg, int workers, ArtifactSink& out)
{
  const auto& r = cfg.run;
  AlphaMeanOptions o;
  o.n_steps = r.n_steps;
  o.epsilon = r.alpha_eps;
  o.workers = workers;
  const auto rep = mean_check_alpha(cfg.spec, r.alpha_s, r.alpha_t, r.n_reps, r.seed, o);
  io::CsvTable t{{"pair", "stream_x", "stream_y", "value"}, {}};
  for (std::size_t k = 0; k < rep.samples.size(); ++k)
    t.rows.push_back({std::to_string(k), std::to_string(2 * k), std::to_string(2 * k + 1), fmt(rep.samples[k])});
  out.write("alpha_samples.csv", t.str());

  json j{{"experiment", "alpha-mean"},
         {"config_hash", config_hash(cfg)},
         {"spec", spec_to_json(cfg.spec)},
         {"s", rep.s},
         {"t", rep.t},
         {"epsilon", rep.epsilon},
         {"n_steps", rep.n_steps},
         {"seed", rep.seed},
         {"n_reps", rep.n_reps},
         {"mc_mean", rep.mc_mean},
         {"std_error", rep.std_error},
         {"closed_form", rep.closed_form},
         {"z_score", rep.z_score}};
  if (!rep.samples.empty()) {
    const std::vector<double> thetas{0.05, 0.1, 0.25, 0.5, 1.0, 2.0};
    const auto em = exponential_moments(rep.samples, cfg.spec, thetas);
    json g = json::array();
    for (const auto& m : em.grid)
      g.push_back({{"theta", m.theta}, {"moment", m.value}, {"relative_error", m.relative_error}});
    j["exponential_moments"] = {{"statistic", "exp(theta alpha^(beta/d))"}, {"grid", g},
                                {"theta_stable", em.theta_stable}};
  }
  out.write("alpha_mean.json", dump(j));
  return {};
}

inline json ensemble_summary(const Ensemble& ens, io::CsvTable& table)
{
  table.header = {"epsilon_ladder_id", "epsilon", "expected_raw", "n", "mean", "std_error", "z"};
  json rows = json::array();
  auto add = [&](int id, double eps, double expected, const std::vector<double>& col) {
    const auto ms = stats::mean_se(col);
    const double z = ms.n > 1 ? ms.z_score(0.0) : std::numeric_limits<double>::quiet_NaN();
    table.rows.push_back({std::to_string(id), fmt(eps), fmt(expected), std::to_string(ms.n), fmt(ms.mean),
                          fmt(ms.std_error), fmt(z)});
    rows.push_back({{"epsilon_ladder_id", id},
                    {"epsilon", eps},
                    {"expected_raw", expected},
                    {"n", ms.n},
                    {"mean", ms.mean},
                    {"std_error", ms.std_error},
                    {"z", z}});
  };
  for (std::size_t i = 0; i < ens.config.eps_ladder.size(); ++i)
    add(static_cast<int>(i), ens.config.eps_ladder[i], ens.expected[i], ens.column(i));
  if (ens.config.extrapolating())
    add(-1, 0.0, std::numeric_limits<double>::quiet_NaN(), ens.extrapolated);
  std::size_t flagged = 0;
  for (double v : ens.extrapolated)
    flagged += std::isnan(v) ? 1 : 0;
  json fails = json::array();
  for (const auto& [k, msg] : ens.failures)
    fails.push_back({{"stream_id", k}, {"error", msg}});
  return json{{"n", ens.size()},
              {"empty", ens.size() == 0},
              {"config_hash", ens.config_hash},
              {"ensemble", ens.config.to_json()},
              {"resumed", ens.resumed},
              {"extrapolation_flagged", ens.config.extrapolating() ? flagged : 0},
              {"failures", fails},
              {"rows", rows}};
}

inline Ensemble ensemble_for(const ExperimentConfig& cfg, int workers, ArtifactSink& out)
{
  EnsembleRunOptions o;
  o.workers = workers;
  o.checkpoint = out.dir() / "ensemble.csv";
  auto ens = run_gamma_ensemble(ensemble_config(cfg), o);
  out.record("ensemble.csv");
  return ens;
}

inline ExperimentOutcome run_ensemble(const ExperimentConfig& cfg, int workers, ArtifactSink& out)
{
  const auto ens = ensemble_for(cfg, workers, out);
  io::CsvTable t;
  auto j = ensemble_summary(ens, t);
  json head{{"experiment", "gamma-ensemble"}, {"config_hash", config_hash(cfg)}};
  head.update(j);
  j = head;
  out.write("ensemble_summary.csv", t.str());
  out.write("ensemble.json", dump(j));
  return {};
}

inline std::optional<VariationalSolution> solve_a_psi(const ExperimentConfig& cfg, int workers)
{
  if (!cfg.spec.gamma_gate())
    return std::nullopt;
  return maximize_M(cfg.spec, 1.0, solver_grid(cfg, 1.0), solver_options(cfg, workers));
}

inline ExperimentOutcome run_tails(const ExperimentConfig& cfg, int workers, ArtifactSink& out)
{
  ExperimentOutcome res;
  const auto ens = ensemble_for(cfg, workers, out);
  const auto col = ens.column(ens.finest());
  const auto up = upper_tail_fit(col, cfg.spec);
  const auto lo = lower_tail_fit(col, cfg.spec);
  const auto var = solve_a_psi(cfg, workers);
  const double a = var ? var->a_value : std::numeric_limits<double>::quiet_NaN();
  if (var && !var->converged) {
    res.nonconverged = true;
    res.notes.push_back("variational solver did not converge; a_psi unavailable");
  }
  json j{{"experiment", "tails"},
         {"config_hash", config_hash(cfg)},
         {"spec", spec_to_json(cfg.spec)},
         {"epsilon", ens.config.eps_ladder.empty() ? 0.0 : ens.config.eps_ladder[ens.finest()]},
         {"n", ens.size()},
         {"upper", to_json(up)},
         {"lower", to_json(lo)},
         {"a_psi", a},
         {"upper_slope_over_a_psi", up.slope / a}};
  std::size_t n = 0;
  for (double v : col)
    n += std::isnan(v) ? 0 : 1;
  if (n > 0) {
    std::vector<double> g, neg;
    for (double v : col)
      if (!std::isnan(v)) {
        g.push_back(v);
        neg.push_back(-v);
      }
    const double qu = stats::quantile(g, 1.0 - 1e-3);
    const double ql = stats::quantile(neg, 1.0 - 1e-3);
    j["upper_quantile_1e-3"] = qu;
    j["lower_quantile_1e-3"] = ql;
    j["asymmetry"] = qu > ql;
  }
  out.write("tails.json", dump(j));

  io::CsvTable t{{"side", "level", "threshold", "count", "survival", "x", "y", "y_lo", "y_hi", "used"}, {}};
  for (const auto* f : {&up, &lo})
    for (const auto& p : f->points)
      t.rows.push_back({f->side, fmt(p.level), fmt(p.threshold), std::to_string(p.count), fmt(p.survival), fmt(p.x),
                        fmt(p.y), fmt(p.y_lo), fmt(p.y_hi), p.used ? "1" : "0"});
  out.write("tail_points.csv", t.str());

  for (const auto* f : {&up, &lo}) {
    io::Plot plot{f->side + " tail: -log P against " + f->transform, f->transform, "-log survival", {}};
    io::Series pts{"empirical", {}, {}, "#1f77b4", true, false};
    for (const auto& p : f->points)
      if (p.used) {
        pts.x.push_back(p.x);
        pts.y.push_back(p.y);
      }
    plot.series.push_back(pts);
    if (f->ok && !pts.x.empty()) {
      const auto [mn, mx] = std::minmax_element(pts.x.begin(), pts.x.end());
      plot.series.push_back({"fit slope " + fmt(f->slope), {*mn, *mx},
                             {f->intercept + f->slope * *mn, f->intercept + f->slope * *mx}, "#d62728", false, true});
    }
    out.write(f->side + "_tail.svg", io::to_svg(plot));
  }
  return res;
}

inline ExperimentOutcome run_scaling(const ExperimentConfig& cfg, int workers, ArtifactSink& out)
{
  ScalingOptions o;
  o.n_steps = cfg.run.n_steps;
  o.epsilon = cfg.run.scale_eps;
  o.workers = workers;
  const auto rep = scaling_test(cfg.spec, cfg.run.scale_t, cfg.run.n_reps, cfg.run.seed, o);
  io::CsvTable t{{"arm", "index", "stream_id", "value"}, {}};
  for (std::size_t k = 0; k < rep.gamma_t.size(); ++k)
    t.rows.push_back({"gamma_t", std::to_string(k), std::to_string(k), fmt(rep.gamma_t[k])});
  for (std::size_t k = 0; k < rep.gamma_1.size(); ++k)
    t.rows.push_back({"gamma_1", std::to_string(k), std::to_string(rep.n_reps + k), fmt(rep.gamma_1[k])});
  out.write("scaling_samples.csv", t.str());
  json j{{"experiment", "scaling-test"},
         {"config_hash", config_hash(cfg)},
         {"spec", spec_to_json(cfg.spec)},
         {"t", rep.t},
         {"exponent", rep.exponent},
         {"wrong_exponent", rep.wrong_exponent},
         {"epsilon", rep.epsilon},
         {"epsilon_t", rep.epsilon_t},
         {"n_steps", rep.n_steps},
         {"n_reps", rep.n_reps},
         {"seed", rep.seed}};
  if (rep.n_reps > 0) {
    j["ks"] = to_json(rep.ks);
    j["ks_wrong_exponent"] = to_json(rep.ks_wrong);
    j["rejected_at_0.01"] = rep.ks.rejected(0.01);
    j["wrong_exponent_rejected_at_0.01"] = rep.ks_wrong.rejected(0.01);
  }
  out.write("scaling.json", dump(j));
  return {};
}

inline ExperimentOutcome run_variational(const ExperimentConfig& cfg, int workers, ArtifactSink& out)
{
  ExperimentOutcome res;
  const double lam = cfg.solver.lambda;
  const auto sol = maximize_M(cfg.spec, lam, solver_grid(cfg, lam), solver_options(cfg, workers));
  if (!sol.converged) {
    res.nonconverged = true;
    res.notes.push_back("variational solver reached max_iter with grad_norm " + fmt(sol.grad_norm));
  }
  json j = to_json(sol, cfg.spec);
  json head{{"experiment", "variational"}, {"config_hash", config_hash(cfg)}};
  head.update(j);
  j = head;
  out.write("variational.json", dump(j));

  io::CsvTable c{{"d", "beta", "family", "coeffs", "lambda", "M_value", "M1", "kappa", "K_value", "a_value",
                  "grad_norm", "converged", "L", "N"},
                 {}};
  std::string coeffs;
  for (std::size_t i = 0; i < cfg.spec.coeffs.size(); ++i)
    coeffs += (i ? " " : "") + fmt(cfg.spec.coeffs[i]);
  c.rows.push_back({std::to_string(cfg.spec.dim), fmt(cfg.spec.beta), std::string(to_string(cfg.spec.family)), coeffs,
                    fmt(lam), fmt(sol.M_value), fmt(j["M1"].get<double>()), fmt(sol.kappa), fmt(sol.K_value),
                    fmt(sol.a_value), fmt(sol.grad_norm), sol.converged ? "1" : "0", fmt(sol.grid.L),
                    std::to_string(sol.grid.N)});
  out.write("constants.csv", c.str());

  io::CsvTable f;
  for (int i = 0; i < cfg.spec.dim; ++i)
    f.header.push_back("x" + std::to_string(i));
  f.header.push_back("f");
  const int N = sol.grid.N;
  for (std::size_t idx = 0; idx < sol.f_values.size(); ++idx) {
    std::vector<std::string> row(static_cast<std::size_t>(cfg.spec.dim));
    std::size_t rem = idx;
    for (int a = cfg.spec.dim - 1; a >= 0; --a) { // row-major: last axis fastest
      row[static_cast<std::size_t>(a)] = fmt(sol.grid.coordinate(static_cast<int>(rem % static_cast<std::size_t>(N))));
      rem /= static_cast<std::size_t>(N);
    }
    row.push_back(fmt(sol.f_values[idx]));
    f.rows.push_back(std::move(row));
  }
  out.write("extremal.csv", f.str());
  return res;
}

inline ExperimentOutcome run_lil(const ExperimentConfig& cfg, int workers, ArtifactSink& out)
{
  ExperimentOutcome res;
  const auto& r = cfg.run;
  LilOptions o;
  o.epsilon = r.lil_eps;
  o.steps_per_unit = r.lil_steps_per_unit;
  std::vector<LilSeries> paths;
  ordered_parallel<LilSeries>(
      0, static_cast<std::size_t>(r.lil_paths), workers,
      [&](std::uint64_t k) { return lil_trajectory(cfg.spec, r.t_max, r.n_checkpoints, r.seed, k, o); },
      [&](std::uint64_t, LilSeries&& s) { paths.push_back(std::move(s)); });
  const auto var = solve_a_psi(cfg, workers);
  const double a = var ? var->a_value : std::numeric_limits<double>::quiet_NaN();
  if (var && !var->converged) {
    res.nonconverged = true;
    res.notes.push_back("variational solver did not converge; LIL envelope unavailable");
  }
  const double envelope = 10.0 * std::pow(a, -cfg.spec.d_over_beta());

  io::CsvTable t{{"stream_id", "t", "gamma", "upper_normalizer", "lower_normalizer", "upper_ratio", "lower_ratio"}, {}};
  double max_upper = -INFINITY;
  bool finite = true;
  io::Plot plot{"normalized self-intersection trajectories", "log10 t", "gamma_t / upper normalizer", {}};
  const char* colors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                          "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  for (const auto& s : paths) {
    io::Series se{"stream " + std::to_string(s.stream_id), {}, {}, colors[s.stream_id % 10], false, true};
    for (const auto& p : s.points) {
      t.rows.push_back({std::to_string(s.stream_id), fmt(p.t), fmt(p.gamma), fmt(p.upper_normalizer),
                        fmt(p.lower_normalizer), fmt(p.upper_ratio), fmt(p.lower_ratio)});
      max_upper = std::max(max_upper, p.upper_ratio);
      finite = finite && std::isfinite(p.upper_ratio) && std::isfinite(p.lower_ratio);
      se.x.push_back(std::log10(p.t));
      se.y.push_back(p.upper_ratio);
    }
    plot.series.push_back(std::move(se));
  }
  if (std::isfinite(envelope) && !paths.empty() && !paths.front().points.empty())
    plot.series.push_back({"envelope 10 a^(-d/beta)",
                           {std::log10(paths.front().points.front().t), std::log10(paths.front().points.back().t)},
                           {envelope, envelope},
                           "#000000",
                           false,
                           true});
  out.write("lil.csv", t.str());
  out.write("lil.svg", io::to_svg(plot));
  json j{{"experiment", "lil"},
         {"config_hash", config_hash(cfg)},
         {"spec", spec_to_json(cfg.spec)},
         {"t_max", r.t_max},
         {"n_checkpoints", r.n_checkpoints},
         {"paths", r.lil_paths},
         {"epsilon", r.lil_eps},
         {"steps_per_unit", r.lil_steps_per_unit},
         {"a_psi", a},
         {"envelope", envelope},
         {"max_upper_ratio", max_upper},
         {"all_finite", finite},
         {"within_envelope", finite && max_upper <= envelope}};
  out.write("lil.json", dump(j));
  return res;
}

inline ExperimentOutcome dispatch(const std::string& command, const ExperimentConfig& cfg, int workers,
                                  ArtifactSink& out)
{
  if (command == "sample")
    return run_sample(cfg, workers, out);
  if (command == "alpha-mean")
    return run_alpha_mean(cfg, workers, out);
  if (command == "gamma-ensemble")
    return run_ensemble(cfg, workers, out);
  if (command == "tails")
    return run_tails(cfg, workers, out);
  if (command == "scaling-test")
    return run_scaling(cfg, workers, out);
  if (command == "variational")
    return run_variational(cfg, workers, out);
  if (command == "lil")
    return run_lil(cfg, workers, out);
  throw ConfigError("unknown command '" + command + "'", "command");
}

inline bool command_allowed(const std::string& command, const StableSpec& spec)
{
  if (command == "sample")
    return true;
  if (command == "alpha-mean")
    return spec.alpha_gate();
  if (command == "variational")
    return spec.beta > 0.5 * spec.dim;
  return spec.gamma_gate();
}

inline std::string utc_now()
{
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream s;
  s << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return s.str();
}

} // namespace detail

/// Applies command-line and environment overrides (flags win over SILT_OUT_DIR / SILT_WORKERS).
inline int resolve_workers(std::optional<int> flag)
{
  if (flag && *flag > 0)
    return *flag;
  if (const char* env = std::getenv("SILT_WORKERS")) {
    const int w = std::atoi(env);
    if (w > 0)
      return w;
  }
  return default_workers();
}

inline std::string resolve_out_dir(const ExperimentConfig& cfg, const std::optional<std::string>& flag)
{
  if (flag && !flag->empty())
    return *flag;
  if (const char* env = std::getenv("SILT_OUT_DIR"); env && *env)
    return env;
  return cfg.output.out_dir;
}

/// Runs the configured experiment, writing artifacts, config echo and manifest under the
/// output directory. Returns 0 on success, 1 on validation errors, 2 on non-convergence.
inline int run(ExperimentConfig cfg, const RunOptions& opts, std::ostream& log)
{
  if (opts.seed)
    cfg.run.seed = *opts.seed;
  if (opts.out_dir)
    cfg.output.out_dir = *opts.out_dir;
  try {
    validate_config(cfg);
  } catch (const ConfigError& e) {
    log << "config error: " << e.what() << "\n";
    return exit_validation;
  }
  const int workers = std::max(1, opts.workers);
  const std::filesystem::path root = cfg.output.out_dir;
  const auto started = std::chrono::steady_clock::now();
  json manifest{{"config_hash", config_hash(cfg)},
                {"command", cfg.command},
                {"started_at", detail::utc_now()},
                {"elapsed_s", 0.0},
                {"artifact_list", json::array()},
                {"status", "incomplete"},
                {"exit_code", nullptr},
                {"workers", workers},
                {"versions", versions_string()},
                {"config", serialize_config(cfg)},
                {"experiments", json::array()}};
  auto write_manifest = [&] { io::write_text(root / "manifest.json", detail::dump(manifest)); };

  int code = exit_ok;
  try {
    io::write_text(root / "config.ini", serialize_config(cfg));
    manifest["artifact_list"].push_back("config.ini");
    write_manifest();
    std::vector<std::string> commands;
    if (cfg.command == "all")
      commands = {"sample", "alpha-mean", "gamma-ensemble", "tails", "scaling-test", "variational", "lil"};
    else
      commands = {cfg.command};
    for (const auto& c : commands) {
      json entry{{"command", c}};
      if (!detail::command_allowed(c, cfg.spec)) {
        if (cfg.command != "all") {
          log << c << ": spec (d=" << cfg.spec.dim << ", beta=" << cfg.spec.beta << ") is outside the range of this "
              << "experiment\n";
          manifest["status"] = "failed";
          manifest["exit_code"] = exit_validation;
          write_manifest();
          return exit_validation;
        }
        entry["status"] = "skipped: spec outside the experiment's range";
        manifest["experiments"].push_back(entry);
        continue;
      }
      log << "running " << c << "\n";
      ArtifactSink sink(root, cfg.command == "all" ? std::filesystem::path(c) : std::filesystem::path(), cfg.output);
      const auto res = detail::dispatch(c, cfg, workers, sink);
      for (const auto& a : sink.list)
        manifest["artifact_list"].push_back(a);
      entry["status"] = res.nonconverged ? "nonconverged" : "ok";
      entry["notes"] = res.notes;
      for (const auto& n : res.notes)
        log << c << ": " << n << "\n";
      manifest["experiments"].push_back(entry);
      if (res.nonconverged)
        code = exit_nonconvergence;
      manifest["elapsed_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
      write_manifest();
    }
  } catch (const GateError& e) {
    log << "error: " << e.what() << "\n";
    code = exit_validation;
  } catch (const ConfigError& e) {
    log << "config error: " << e.what() << "\n";
    code = exit_validation;
  } catch (const ProvenanceError& e) {
    log << "provenance error: " << e.what() << "\n";
    code = exit_validation;
  } catch (const std::invalid_argument& e) {
    log << "error: " << e.what() << "\n";
    code = exit_validation;
  }
  manifest["elapsed_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  manifest["status"] = code == exit_validation ? "failed" : "complete";
  manifest["exit_code"] = code;
  write_manifest();
  return code;
}

// ---------------------------------------------------------------------------
// Report.

namespace detail {

inline std::string cell(const json& v)
{
  if (v.is_null())
    return "nan";
  if (v.is_number_float()) {
    std::ostringstream s;
    s << std::setprecision(6) << v.get<double>();
    return s.str();
  }
  if (v.is_boolean())
    return v.get<bool>() ? "yes" : "no";
  if (v.is_string())
    return v.get<std::string>();
  return v.dump();
}

inline std::string table(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows)
{
  std::vector<std::size_t> w(header.size());
  for (std::size_t i = 0; i < header.size(); ++i)
    w[i] = header[i].size();
  for (const auto& r : rows)
    for (std::size_t i = 0; i < r.size() && i < w.size(); ++i)
      w[i] = std::max(w[i], r[i].size());
  std::ostringstream s;
  auto line = [&](const std::vector<std::string>& r) {
    for (std::size_t i = 0; i < w.size(); ++i)
      s << (i ? "  " : "") << std::left << std::setw(static_cast<int>(w[i])) << (i < r.size() ? r[i] : "");
    s << "\n";
  };
  line(header);
  std::vector<std::string> rule;
  for (auto x : w)
    rule.push_back(std::string(x, '-'));
  line(rule);
  for (const auto& r : rows)
    line(r);
  return s.str();
}

inline std::optional<json> load_json(const std::filesystem::path& p)
{
  if (!std::filesystem::exists(p))
    return std::nullopt;
  try {
    return json::parse(io::read_text(p));
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

inline std::string report_dir(const std::filesystem::path& dir, const std::string& command)
{
  std::ostringstream s;
  auto missing = [&](const std::string& name) { s << command << ": missing artifact " << name << "\n\n"; };
  if (command == "sample") {
    s << command << ": " << (std::filesystem::exists(dir / "paths.csv") ? "paths.csv present" : "paths.csv missing")
      << "\n\n";
  } else if (command == "alpha-mean") {
    const auto j = load_json(dir / "alpha_mean.json");
    if (!j)
      return missing("alpha_mean.json"), s.str();
    s << "mutual intersection mean (s=" << cell((*j)["s"]) << ", t=" << cell((*j)["t"]) << ")\n";
    s << table({"d", "beta", "n", "closed_form", "mc_mean", "std_error", "z"},
               {{cell((*j)["spec"]["dim"]), cell((*j)["spec"]["beta"]), cell((*j)["n_reps"]), cell((*j)["closed_form"]),
                 cell((*j)["mc_mean"]), cell((*j)["std_error"]), cell((*j)["z_score"])}})
      << "\n";
  } else if (command == "gamma-ensemble") {
    const auto j = load_json(dir / "ensemble.json");
    if (!j)
      return missing("ensemble.json"), s.str();
    s << "centered ensemble" << ((*j)["n"].get<std::size_t>() == 0 ? " [n=0: empty ensemble]" : "") << "\n";
    std::vector<std::vector<std::string>> rows;
    for (const auto& r : (*j)["rows"])
      if ((*j)["n"].get<std::size_t>() > 0)
        rows.push_back({cell(r["epsilon_ladder_id"]), cell(r["epsilon"]), cell(r["n"]), cell(r["mean"]),
                        cell(r["std_error"]), cell(r["z"])});
    s << table({"ladder_id", "epsilon", "n", "mean", "std_error", "z"}, rows);
    s << "extrapolation flagged: " << cell((*j)["extrapolation_flagged"]) << ", failures: " << (*j)["failures"].size()
      << "\n\n";
  } else if (command == "tails") {
    const auto j = load_json(dir / "tails.json");
    if (!j)
      return missing("tails.json"), s.str();
    s << "tail fits (n=" << cell((*j)["n"]) << ", eps=" << cell((*j)["epsilon"]) << ")\n";
    std::vector<std::vector<std::string>> rows;
    for (const char* side : {"upper", "lower"}) {
      const auto& f = (*j)[side];
      const bool up = std::string(side) == "upper";
      rows.push_back({side, cell(f["transform"]), cell(f["slope"]),
                      "[" + cell(f["band_lo"]) + ", " + cell(f["band_hi"]) + "]", cell(f["usable_points"]),
                      up ? cell((*j)["a_psi"]) : "-", up ? cell((*j)["upper_slope_over_a_psi"]) : "-",
                      f["ok"].get<bool>() ? "" : cell(f["error"])});
    }
    s << table({"side", "x(h)", "slope", "band", "points", "a_psi", "ratio", "note"}, rows);
    if (j->contains("asymmetry"))
      s << "1e-3 quantiles: upper " << cell((*j)["upper_quantile_1e-3"]) << ", lower "
        << cell((*j)["lower_quantile_1e-3"]) << ", upper heavier: " << cell((*j)["asymmetry"]) << "\n";
    s << "\n";
  } else if (command == "scaling-test") {
    const auto j = load_json(dir / "scaling.json");
    if (!j)
      return missing("scaling.json"), s.str();
    s << "scaling law (t=" << cell((*j)["t"]) << ", n=" << cell((*j)["n_reps"]) << " per arm)\n";
    std::vector<std::vector<std::string>> rows;
    if (j->contains("ks")) {
      rows.push_back({cell((*j)["exponent"]), cell((*j)["ks"]["statistic"]), cell((*j)["ks"]["p_value"]),
                      cell((*j)["rejected_at_0.01"])});
      rows.push_back({cell((*j)["wrong_exponent"]) + " (control)", cell((*j)["ks_wrong_exponent"]["statistic"]),
                      cell((*j)["ks_wrong_exponent"]["p_value"]), cell((*j)["wrong_exponent_rejected_at_0.01"])});
    }
    s << table({"exponent", "ks_statistic", "p_value", "rejected_0.01"}, rows) << "\n";
  } else if (command == "variational") {
    const auto j = load_json(dir / "variational.json");
    if (!j)
      return missing("variational.json"), s.str();
    s << "variational constants\n";
    s << table({"d", "beta", "lambda", "M_value", "kappa", "K_value", "a_value", "grad_norm", "converged", "N"},
               {{cell((*j)["d"]), cell((*j)["beta"]), cell((*j)["lambda"]), cell((*j)["M_value"]), cell((*j)["kappa"]),
                 cell((*j)["K_value"]), cell((*j)["a_value"]), cell((*j)["grad_norm"]), cell((*j)["converged"]),
                 cell((*j)["N"])}})
      << "\n";
  } else if (command == "lil") {
    const auto j = load_json(dir / "lil.json");
    if (!j)
      return missing("lil.json"), s.str();
    s << "iterated-logarithm diagnostics\n";
    s << table({"paths", "t_max", "max_upper_ratio", "envelope", "within", "finite"},
               {{cell((*j)["paths"]), cell((*j)["t_max"]), cell((*j)["max_upper_ratio"]), cell((*j)["envelope"]),
                 cell((*j)["within_envelope"]), cell((*j)["all_finite"])}})
      << "\n";
  }
  return s.str();
}

} // namespace detail

/// Human-readable summary of a run directory; missing or incomplete artifacts are reported as such.
inline std::string report(const std::filesystem::path& dir)
{
  const auto m = detail::load_json(dir / "manifest.json");
  if (!m)
    return "no manifest.json in " + dir.string() + "\n";
  std::ostringstream s;
  const std::string command = (*m)["command"].get<std::string>();
  s << "run " << command << "  config_hash " << detail::cell((*m)["config_hash"]) << "  status "
    << detail::cell((*m)["status"]) << "  elapsed " << detail::cell((*m)["elapsed_s"]) << " s\n";
  if ((*m)["status"] != "complete")
    s << "[incomplete run: tables below may be partial]\n";
  s << "\n";
  for (const auto& e : (*m)["experiments"]) {
    const std::string c = e["command"].get<std::string>();
    const std::string st = e["status"].get<std::string>();
    if (st.rfind("skipped", 0) == 0) {
      s << c << ": " << st << "\n\n";
      continue;
    }
    s << detail::report_dir(command == "all" ? dir / c : dir, c);
  }
  return s.str();
}

} // namespace silt

#endif // SILT_RUNNER_HPP
