#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <random>
#include <numbers>
#include <thread>

#include <unistd.h>

#include "silt/io.hpp"
#include "silt/mc_lab.hpp"

using namespace silt;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name)
{
  const auto p = fs::temp_directory_path() / ("silt_mc_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

EnsembleConfig small_config(std::uint64_t n_reps)
{
  EnsembleConfig c;
  c.spec = isotropic(1, 0.8);
  c.n_steps = 128;
  c.eps_ladder = {0.2, 0.1, 0.05};
  c.n_reps = n_reps;
  c.seed = 11;
  return c;
}

} // namespace

TEST(OrderedParallel, SinkSeesIncreasingIndices)
{
  std::vector<std::size_t> seen;
  ordered_parallel<std::size_t>(
      5, 200, 8,
      [](std::size_t i) {
        std::this_thread::sleep_for(std::chrono::microseconds((i * 7919) % 300));
        return i * i;
      },
      [&](std::size_t i, std::size_t v) {
        EXPECT_EQ(v, i * i);
        seen.push_back(i);
      });
  ASSERT_EQ(seen.size(), 200u);
  for (std::size_t k = 0; k < seen.size(); ++k)
    EXPECT_EQ(seen[k], 5 + k);
}

TEST(OrderedParallel, PropagatesExceptions)
{
  EXPECT_THROW(ordered_parallel<int>(
                   0, 50, 4,
                   [](std::size_t i) {
                     if (i == 17)
                       throw std::runtime_error("boom");
                     return 0;
                   },
                   [](std::size_t, int) {}),
               std::runtime_error);
}

TEST(Ensemble, EmptyEnsembleKeepsProvenance)
{
  const auto dir = fresh_dir("empty");
  const auto cfg = small_config(0);
  const auto ens = run_gamma_ensemble(cfg, {1, dir / "e.csv"});
  EXPECT_EQ(ens.size(), 0u);
  EXPECT_EQ(ens.config_hash, cfg.hash());
  ASSERT_EQ(ens.expected.size(), 3u);
  const auto text = io::read_text(dir / "e.csv");
  EXPECT_NE(text.find("config_hash=" + cfg.hash()), std::string::npos);
  EXPECT_NE(text.find("stream_id,value,epsilon_ladder_id,n_steps"), std::string::npos);
  EXPECT_EQ(load_ensemble(cfg, dir / "e.csv").size(), 0u);
}

TEST(Ensemble, IndependentOfWorkerCount)
{
  const auto dir = fresh_dir("workers");
  const auto cfg = small_config(40);
  const auto a = run_gamma_ensemble(cfg, {1, dir / "a.csv"});
  const auto b = run_gamma_ensemble(cfg, {4, dir / "b.csv"});
  EXPECT_EQ(a.values, b.values);
  EXPECT_EQ(io::read_text(dir / "a.csv"), io::read_text(dir / "b.csv"));
  // Rows per replicate: three ladder points plus the extrapolated value.
  const auto text = io::read_text(dir / "a.csv");
  EXPECT_EQ(static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')), 2u + 40u * 4u);
  EXPECT_NE(text.find("\n0,"), std::string::npos);
  EXPECT_NE(text.find(",-1,128\n"), std::string::npos);
}

TEST(Ensemble, ResumesFromTruncatedCheckpoint)
{
  const auto dir = fresh_dir("resume");
  const auto cfg = small_config(25);
  const auto full = run_gamma_ensemble(cfg, {2, dir / "full.csv"});
  const auto reference = io::read_text(dir / "full.csv");

  // Simulate a crash in the middle of a row.
  auto cut = reference.substr(0, reference.size() * 3 / 5);
  cut.resize(cut.size() - 3);
  io::write_text(dir / "part.csv", cut);
  const auto resumed = run_gamma_ensemble(cfg, {3, dir / "part.csv"});
  EXPECT_GT(resumed.resumed, 0u);
  EXPECT_LT(resumed.resumed, 25u);
  EXPECT_EQ(io::read_text(dir / "part.csv"), reference);
  ASSERT_EQ(resumed.size(), full.size());
  for (std::size_t k = 0; k < full.size(); ++k)
    for (std::size_t i = 0; i < 3; ++i)
      EXPECT_EQ(io::format_double(resumed.values[k][i]), io::format_double(full.values[k][i]));

  // A finished checkpoint needs no further work.
  const auto again = run_gamma_ensemble(cfg, {1, dir / "full.csv"});
  EXPECT_EQ(again.resumed, 25u);
  EXPECT_EQ(io::read_text(dir / "full.csv"), reference);
}

TEST(Ensemble, RejectsForeignCheckpoint)
{
  const auto dir = fresh_dir("foreign");
  auto cfg = small_config(5);
  run_gamma_ensemble(cfg, {1, dir / "e.csv"});
  cfg.seed = 12;
  EXPECT_THROW(run_gamma_ensemble(cfg, {1, dir / "e.csv"}), ProvenanceError);
  io::write_text(dir / "junk.csv", "stream_id,value\n1,2\n");
  EXPECT_THROW(run_gamma_ensemble(cfg, {1, dir / "junk.csv"}), ProvenanceError);
}

TEST(Ensemble, GateAndArguments)
{
  auto cfg = small_config(1);
  cfg.spec = isotropic(1, 0.6);
  EXPECT_THROW(run_gamma_ensemble(cfg), GateError);
  cfg = small_config(1);
  cfg.eps_ladder.clear();
  EXPECT_THROW(run_gamma_ensemble(cfg), std::invalid_argument);
}

TEST(Ensemble, CenteredWithinThreeStandardErrors)
{
  auto cfg = small_config(2000);
  cfg.n_steps = 256;
  cfg.eps_ladder = {0.2, 0.1};
  const auto ens = run_gamma_ensemble(cfg, {4, {}});
  ASSERT_EQ(ens.size(), 2000u);
  EXPECT_TRUE(ens.failures.empty());
  for (std::size_t i = 0; i < 2; ++i) {
    const auto ms = stats::mean_se(ens.column(i));
    EXPECT_LT(std::abs(ms.z_score(0.0)), 3.0) << "eps=" << cfg.eps_ladder[i];
  }
  EXPECT_EQ(ens.finest(), 1u);
}

TEST(TailFit, RecoversUpperSlope)
{
  // P(Z >= h) = exp(-3 h^{beta/d}).
  const auto spec = isotropic(1, 0.8);
  std::mt19937_64 gen(5);
  std::exponential_distribution<double> ex(1.0);
  std::vector<double> z(1'000'000);
  for (double& v : z)
    v = std::pow(ex(gen) / 3.0, 1.0 / 0.8);
  const auto fit = upper_tail_fit(z, spec);
  ASSERT_TRUE(fit.ok) << fit.error;
  EXPECT_NEAR(fit.slope, 3.0, 0.05);
  EXPECT_LE(fit.band_lo, fit.slope);
  EXPECT_GE(fit.band_hi, fit.slope);
  EXPECT_EQ(fit.side, "upper");
  EXPECT_GE(fit.usable(), 4u);
  for (std::size_t i = 1; i < fit.points.size(); ++i)
    EXPECT_LE(fit.points[i].count, fit.points[i - 1].count);
}

TEST(TailFit, RecoversLowerSlopePowerMap)
{
  // beta < d: P(-Z >= h) = exp(-3 h^{beta/(d-beta)}).
  const auto spec = isotropic(2, 1.5);
  std::mt19937_64 gen(6);
  std::exponential_distribution<double> ex(1.0);
  std::vector<double> z(1'000'000);
  for (double& v : z)
    v = -std::pow(ex(gen) / 3.0, 0.5 / 1.5);
  const auto fit = lower_tail_fit(z, spec);
  ASSERT_TRUE(fit.ok) << fit.error;
  EXPECT_NEAR(fit.slope, 3.0, 0.05);
  EXPECT_DOUBLE_EQ(fit.exponent, 3.0);
}

TEST(TailFit, RecoversLowerSlopeExponentialMap)
{
  // beta = d: P(-Z >= h) = exp(-3 exp(h / p_1(0))).
  const auto spec = isotropic(1, 1.0);
  const double p1 = density_at_zero(spec);
  std::mt19937_64 gen(7);
  std::exponential_distribution<double> ex(1.0);
  std::vector<double> z(1'000'000);
  for (double& v : z)
    v = -p1 * std::log(ex(gen) / 3.0);
  const auto fit = lower_tail_fit(z, spec);
  ASSERT_TRUE(fit.ok) << fit.error;
  EXPECT_NEAR(fit.slope, 3.0, 0.05);
  EXPECT_EQ(fit.transform, "exp(h/p_1(0))");
}

TEST(TailFit, ReportsThinTailsAndSmallSamples)
{
  const auto spec = isotropic(1, 0.8);
  std::vector<double> few(500, 1.0);
  auto fit = upper_tail_fit(few, spec);
  EXPECT_FALSE(fit.ok);
  EXPECT_NE(fit.error.find("at least"), std::string::npos);

  // Mostly non-positive samples leave too few thresholds with h > 0.
  std::vector<double> z(20000, -1.0);
  for (std::size_t i = 0; i < 150; ++i)
    z[i] = 1.0 + static_cast<double>(i);
  fit = upper_tail_fit(z, spec);
  EXPECT_FALSE(fit.ok);
  EXPECT_NE(fit.error.find("insufficient tail mass"), std::string::npos);
}

TEST(AlphaMean, SmallRunMatchesClosedForm)
{
  const auto spec = isotropic(1, 1.0);
  const auto rep = mean_check_alpha(spec, 1.0, 1.0, 400, 3, {1024, 1e-4, 4});
  ASSERT_EQ(rep.samples.size(), 400u);
  EXPECT_NEAR(rep.closed_form, 2.0 * std::log(2.0) / std::numbers::pi, 1e-10);
  EXPECT_TRUE(std::isfinite(rep.z_score));
  EXPECT_LT(std::abs(rep.z_score), 4.0);
  for (double v : rep.samples)
    EXPECT_GE(v, 0.0);
  EXPECT_THROW(mean_check_alpha(isotropic(1, 0.4), 1.0, 1.0, 1, 1), GateError);
}

TEST(AlphaMean, ExponentialMoments)
{
  const auto spec = isotropic(1, 1.0);
  const std::vector<double> a{0.1, 0.2, 0.5, 0.3, 1.0, 0.0};
  const std::vector<double> th{0.0, 1.0};
  const auto rep = exponential_moments(a, spec, th);
  ASSERT_EQ(rep.grid.size(), 2u);
  EXPECT_DOUBLE_EQ(rep.grid[0].value, 1.0);
  EXPECT_DOUBLE_EQ(rep.grid[0].relative_error, 0.0);
  double m = 0.0;
  for (double x : a)
    m += std::exp(x);
  EXPECT_NEAR(rep.grid[1].value, m / 6.0, 1e-12);
  EXPECT_GE(rep.theta_stable, 0.0);
  EXPECT_LE(rep.theta_stable, 4.0);
}

TEST(Scaling, SameLawAtUnitTimeAndControlRejected)
{
  const auto spec = isotropic(1, 0.8);
  ScalingOptions o{256, 0.1, 4, 1.0};
  const auto same = scaling_test(spec, 1.0, 1000, 21, o);
  EXPECT_FALSE(same.ks.rejected(0.01));
  EXPECT_EQ(same.gamma_t.size(), 1000u);
  EXPECT_EQ(same.gamma_1.size(), 1000u);

  const auto far = scaling_test(spec, 4.0, 1000, 22, o);
  EXPECT_DOUBLE_EQ(far.exponent, 0.75);
  EXPECT_DOUBLE_EQ(far.epsilon_t, std::pow(4.0, 1.25) * 0.1);
  EXPECT_FALSE(far.ks.rejected(0.01));
  EXPECT_TRUE(far.ks_wrong.rejected(0.01));
  EXPECT_THROW(scaling_test(spec, 0.0, 1, 1), std::invalid_argument);
}

TEST(Lil, NormalizersMatchDefinitions)
{
  const auto a = isotropic(1, 0.8);
  const double t = 100.0;
  const double ll = std::log(std::log(t));
  EXPECT_DOUBLE_EQ(lil_upper_normalizer(a, t), std::pow(t, 0.75) * std::pow(ll, 1.25));
  EXPECT_DOUBLE_EQ(lil_lower_normalizer(a, t), std::pow(t, 0.75) * std::pow(ll, 0.25));
  const auto b = isotropic(1, 1.0);
  EXPECT_DOUBLE_EQ(lil_upper_normalizer(b, t), t * ll);
  EXPECT_DOUBLE_EQ(lil_lower_normalizer(b, t), t * std::log(ll));
}

TEST(Lil, TrajectoryCheckpoints)
{
  const auto spec = isotropic(1, 0.8);
  const auto s = lil_trajectory(spec, 64.0, 10, 4, 2);
  ASSERT_FALSE(s.points.empty());
  EXPECT_DOUBLE_EQ(s.points.front().t, 16.0);
  EXPECT_DOUBLE_EQ(s.points.back().t, 64.0);
  for (std::size_t i = 0; i < s.points.size(); ++i) {
    const auto& p = s.points[i];
    EXPECT_TRUE(std::isfinite(p.gamma));
    EXPECT_DOUBLE_EQ(p.upper_ratio, p.gamma / p.upper_normalizer);
    if (i > 0) {
      EXPECT_GT(p.t, s.points[i - 1].t);
    }
  }
  // The last checkpoint is gamma over the whole path.
  const auto path = sample_path(spec, 64.0, 64 * 16, 4, 2);
  const double whole = gamma_regularized(path, MollifierKernel(1.0, 1)).value;
  EXPECT_NEAR(s.points.back().gamma, whole, 1e-9 * (1.0 + std::abs(whole)));

  EXPECT_THROW(lil_trajectory(spec, 1001.0, 10, 1), std::invalid_argument);
  EXPECT_THROW(lil_trajectory(spec, 8.0, 10, 1), std::invalid_argument);
  EXPECT_THROW(lil_trajectory(isotropic(2, 1.2), 64.0, 10, 1), GateError);
}
