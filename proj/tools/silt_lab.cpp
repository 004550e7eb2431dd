// Command-line front end: silt_lab --config run.ini [--seed N] [--workers N] [--out-dir DIR]
//                          silt_lab --report DIR

#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "silt/runner.hpp"

int main(int argc, char** argv)
{
  CLI::App app{"Monte Carlo and variational lab for stable self-intersection local times"};
  std::string config_path;
  std::string report_dir;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::optional<std::string> out_dir;
  auto* cfg_opt = app.add_option("--config", config_path, "experiment config file")->check(CLI::ExistingFile);
  auto* rep_opt = app.add_option("--report", report_dir, "print the summary tables of a finished run directory");
  app.add_option("--seed", seed, "override run.seed");
  app.add_option("--workers", workers, "worker threads (default: SILT_WORKERS or all cores)");
  app.add_option("--out-dir", out_dir, "override output.out_dir (default: SILT_OUT_DIR or the config value)");
  cfg_opt->excludes(rep_opt);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : silt::exit_validation;
  }

  if (!report_dir.empty()) {
    std::cout << silt::report(report_dir);
    return 0;
  }
  if (config_path.empty()) {
    std::cerr << "--config is required\n";
    return silt::exit_validation;
  }

  silt::ExperimentConfig cfg;
  try {
    cfg = silt::parse_config(silt::io::read_text(config_path));
  } catch (const silt::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return silt::exit_validation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return silt::exit_validation;
  }
  silt::RunOptions opts;
  opts.workers = silt::resolve_workers(workers);
  opts.seed = seed;
  opts.out_dir = silt::resolve_out_dir(cfg, out_dir);
  const int code = silt::run(cfg, opts, std::cerr);
  if (code != silt::exit_validation)
    std::cout << silt::report(*opts.out_dir);
  return code;
}
