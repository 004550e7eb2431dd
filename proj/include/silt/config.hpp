#ifndef SILT_CONFIG_HPP
#define SILT_CONFIG_HPP

#include <cstdint>
#include <cstdlib>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "silt/io.hpp"
#include "silt/stable_spec.hpp"

// Experiment configuration in a flat sectioned text format:
//
//   command = tails
//   [spec]
//   dim = 1
//   beta = 0.8
//   family = isotropic
//   coeffs = 1
//   [run]
//   n_reps = 100000
//
// Lists are comma separated, optionally in brackets. `#` and `;` start comments.

namespace silt {

/// Bad config text or values; `key` names the offending entry when there is one.
class ConfigError : public std::runtime_error {
public:
  ConfigError(const std::string& what, std::string key = {}) : std::runtime_error(what), key(std::move(key)) {}
  std::string key;
};

inline const std::vector<std::string>& known_commands()
{
  static const std::vector<std::string> c{"sample", "alpha-mean", "gamma-ensemble", "tails",
                                          "scaling-test", "variational", "lil", "all"};
  return c;
}

struct RunBlock {
  double t_end = 1.0;
  int n_steps = 1024;
  std::vector<double> eps_ladder{0.1, 0.05, 0.025};
  std::uint64_t n_reps = 1000;
  std::uint64_t seed = 1;
  double alpha_s = 1.0;
  double alpha_t = 1.0;
  double alpha_eps = 1e-4;
  double scale_t = 2.0;
  double scale_eps = 0.05;
  double t_max = 1000.0;
  int n_checkpoints = 40;
  int lil_paths = 10;
  int lil_steps_per_unit = 16;
  double lil_eps = 1.0;

  bool operator==(const RunBlock&) const = default;
};

struct SolverBlock {
  /// Half-length of the box in units of the optimal Gaussian-trial width (0: per-dimension default).
  double L = 0.0;
  /// Points per axis (0: per-dimension default).
  int N = 0;
  double lambda = 1.0;
  double tol = 1e-8;
  int max_iter = 20000;

  bool operator==(const SolverBlock&) const = default;
};

struct OutputBlock {
  std::string out_dir = "out";
  /// Subset of {csv, json, svg}.
  std::vector<std::string> formats{"csv", "json", "svg"};

  bool operator==(const OutputBlock&) const = default;

  bool wants(const std::string& f) const
  {
    for (const auto& x : formats)
      if (x == f)
        return true;
    return false;
  }
};

struct ExperimentConfig {
  std::string command = "all";
  StableSpec spec = isotropic(1, 0.8, 1.0);
  RunBlock run;
  SolverBlock solver;
  OutputBlock output;

  bool operator==(const ExperimentConfig& o) const
  {
    return command == o.command && spec == o.spec && run == o.run && solver == o.solver && output == o.output;
  }
};

namespace detail {

inline std::string join_doubles(const std::vector<double>& v)
{
  std::string s = "[";
  for (std::size_t i = 0; i < v.size(); ++i)
    s += (i ? ", " : "") + io::format_double(v[i]);
  return s + "]";
}

inline std::string join_strings(const std::vector<std::string>& v)
{
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i)
    s += (i ? "," : "") + v[i];
  return s;
}

inline std::vector<std::string> list_items(std::string text)
{
  text = io::trim(text);
  if (!text.empty() && text.front() == '[') {
    if (text.back() != ']')
      throw std::invalid_argument("unterminated list");
    text = text.substr(1, text.size() - 2);
  }
  std::vector<std::string> out;
  if (io::trim(text).empty())
    return out;
  for (const auto& item : io::split(text, ','))
    out.push_back(io::trim(item));
  return out;
}

inline double to_double(const std::string& key, const std::string& v)
{
  try {
    return io::parse_double(v);
  } catch (const std::exception&) {
    throw ConfigError("'" + key + "' expects a number, got '" + v + "'", key);
  }
}

inline long long to_int(const std::string& key, const std::string& v)
{
  char* end = nullptr;
  const long long x = std::strtoll(v.c_str(), &end, 10);
  if (v.empty() || *end != '\0')
    throw ConfigError("'" + key + "' expects an integer, got '" + v + "'", key);
  return x;
}

inline std::uint64_t to_u64(const std::string& key, const std::string& v)
{
  char* end = nullptr;
  if (v.empty() || v.front() == '-')
    throw ConfigError("'" + key + "' expects a nonnegative integer, got '" + v + "'", key);
  const unsigned long long x = std::strtoull(v.c_str(), &end, 10);
  if (*end != '\0')
    throw ConfigError("'" + key + "' expects a nonnegative integer, got '" + v + "'", key);
  return x;
}

inline std::vector<double> to_doubles(const std::string& key, const std::string& v)
{
  std::vector<std::string> items;
  try {
    items = list_items(v);
  } catch (const std::exception& e) {
    throw ConfigError("'" + key + "': " + e.what(), key);
  }
  std::vector<double> out;
  for (const auto& s : items)
    out.push_back(to_double(key, s));
  return out;
}

} // namespace detail

/// Canonical text form; parse_config(serialize_config(c)) == c.
inline std::string serialize_config(const ExperimentConfig& c)
{
  using io::format_double;
  std::ostringstream s;
  s << "command = " << c.command << "\n";
  s << "\n[spec]\n";
  s << "dim = " << c.spec.dim << "\n";
  s << "beta = " << format_double(c.spec.beta) << "\n";
  s << "family = " << to_string(c.spec.family) << "\n";
  s << "coeffs = " << detail::join_doubles(c.spec.coeffs) << "\n";
  const auto& r = c.run;
  s << "\n[run]\n";
  s << "t_end = " << format_double(r.t_end) << "\n";
  s << "n_steps = " << r.n_steps << "\n";
  s << "eps_ladder = " << detail::join_doubles(r.eps_ladder) << "\n";
  s << "n_reps = " << r.n_reps << "\n";
  s << "seed = " << r.seed << "\n";
  s << "alpha_s = " << format_double(r.alpha_s) << "\n";
  s << "alpha_t = " << format_double(r.alpha_t) << "\n";
  s << "alpha_eps = " << format_double(r.alpha_eps) << "\n";
  s << "scale_t = " << format_double(r.scale_t) << "\n";
  s << "scale_eps = " << format_double(r.scale_eps) << "\n";
  s << "t_max = " << format_double(r.t_max) << "\n";
  s << "n_checkpoints = " << r.n_checkpoints << "\n";
  s << "lil_paths = " << r.lil_paths << "\n";
  s << "lil_steps_per_unit = " << r.lil_steps_per_unit << "\n";
  s << "lil_eps = " << format_double(r.lil_eps) << "\n";
  const auto& v = c.solver;
  s << "\n[solver]\n";
  s << "L = " << format_double(v.L) << "\n";
  s << "N = " << v.N << "\n";
  s << "lambda = " << format_double(v.lambda) << "\n";
  s << "tol = " << format_double(v.tol) << "\n";
  s << "max_iter = " << v.max_iter << "\n";
  s << "\n[output]\n";
  s << "out_dir = " << c.output.out_dir << "\n";
  s << "formats = " << detail::join_strings(c.output.formats) << "\n";
  return s.str();
}

/// Checks value ranges and command names; throws ConfigError.
inline void validate_config(const ExperimentConfig& c)
{
  bool known = false;
  for (const auto& k : known_commands())
    known = known || k == c.command;
  if (!known)
    throw ConfigError("unknown command '" + c.command + "'", "command");
  try {
    c.spec.validate();
  } catch (const std::exception& e) {
    throw ConfigError(std::string("[spec] ") + e.what(), "spec");
  }
  const auto& r = c.run;
  auto need = [](bool ok, const std::string& key, const std::string& what) {
    if (!ok)
      throw ConfigError("'" + key + "' " + what, key);
  };
  need(r.t_end > 0.0, "t_end", "must be positive");
  need(r.n_steps >= 1, "n_steps", "must be at least 1");
  need(!r.eps_ladder.empty(), "eps_ladder", "must not be empty");
  for (double e : r.eps_ladder)
    need(e > 0.0, "eps_ladder", "entries must be positive");
  need(r.alpha_s > 0.0 && r.alpha_t > 0.0, "alpha_s", "and alpha_t must be positive");
  need(r.alpha_eps > 0.0, "alpha_eps", "must be positive");
  need(r.scale_t > 0.0, "scale_t", "must be positive");
  need(r.scale_eps > 0.0, "scale_eps", "must be positive");
  need(r.t_max >= 16.0 && r.t_max <= 1000.0, "t_max", "must lie in [16, 1000]");
  need(r.n_checkpoints >= 1, "n_checkpoints", "must be at least 1");
  need(r.lil_paths >= 1, "lil_paths", "must be at least 1");
  need(r.lil_steps_per_unit >= 1, "lil_steps_per_unit", "must be at least 1");
  need(r.lil_eps > 0.0, "lil_eps", "must be positive");
  const auto& v = c.solver;
  need(v.L >= 0.0, "L", "must be nonnegative");
  need(v.N == 0 || (v.N >= 64 && (v.N & (v.N - 1)) == 0), "N", "must be 0 or a power of two >= 64");
  need(v.lambda > 0.0, "lambda", "must be positive");
  need(v.tol > 0.0, "tol", "must be positive");
  need(v.max_iter >= 1, "max_iter", "must be at least 1");
  need(!c.output.out_dir.empty(), "out_dir", "must not be empty");
  for (const auto& f : c.output.formats)
    need(f == "csv" || f == "json" || f == "svg", "formats", "entries must be csv, json or svg");
}

/// Parses config text over the documented defaults. Unknown sections or keys are errors.
inline ExperimentConfig parse_config(const std::string& text)
{
  ExperimentConfig c;
  std::string section;
  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  std::map<std::string, int> seen;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find_first_of("#;");
    const std::string line = io::trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty())
      continue;
    const std::string where = "line " + std::to_string(line_no) + ": ";
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError(where + "malformed section header '" + line + "'");
      section = io::trim(line.substr(1, line.size() - 2));
      if (section != "spec" && section != "run" && section != "solver" && section != "output")
        throw ConfigError(where + "unknown section [" + section + "]", section);
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(where + "expected key = value, got '" + line + "'");
    const std::string key = io::trim(line.substr(0, eq));
    const std::string val = io::trim(line.substr(eq + 1));
    const std::string qualified = section.empty() ? key : section + "." + key;
    if (seen.count(qualified))
      throw ConfigError(where + "duplicate key '" + qualified + "'", key);
    seen[qualified] = line_no;

    auto unknown = [&] { return ConfigError(where + "unknown key '" + key + "' in " + (section.empty() ? "top level" : "[" + section + "]"), key); };
    using namespace detail;
    if (section.empty()) {
      if (key == "command")
        c.command = val;
      else
        throw unknown();
    } else if (section == "spec") {
      if (key == "dim")
        c.spec.dim = static_cast<int>(to_int(key, val));
      else if (key == "beta")
        c.spec.beta = to_double(key, val);
      else if (key == "family") {
        try {
          c.spec.family = family_from_string(val);
        } catch (const std::exception& e) {
          throw ConfigError(where + e.what(), key);
        }
      } else if (key == "coeffs")
        c.spec.coeffs = to_doubles(key, val);
      else
        throw unknown();
    } else if (section == "run") {
      auto& r = c.run;
      if (key == "t_end")
        r.t_end = to_double(key, val);
      else if (key == "n_steps")
        r.n_steps = static_cast<int>(to_int(key, val));
      else if (key == "eps_ladder")
        r.eps_ladder = to_doubles(key, val);
      else if (key == "n_reps")
        r.n_reps = to_u64(key, val);
      else if (key == "seed")
        r.seed = to_u64(key, val);
      else if (key == "alpha_s")
        r.alpha_s = to_double(key, val);
      else if (key == "alpha_t")
        r.alpha_t = to_double(key, val);
      else if (key == "alpha_eps")
        r.alpha_eps = to_double(key, val);
      else if (key == "scale_t")
        r.scale_t = to_double(key, val);
      else if (key == "scale_eps")
        r.scale_eps = to_double(key, val);
      else if (key == "t_max")
        r.t_max = to_double(key, val);
      else if (key == "n_checkpoints")
        r.n_checkpoints = static_cast<int>(to_int(key, val));
      else if (key == "lil_paths")
        r.lil_paths = static_cast<int>(to_int(key, val));
      else if (key == "lil_steps_per_unit")
        r.lil_steps_per_unit = static_cast<int>(to_int(key, val));
      else if (key == "lil_eps")
        r.lil_eps = to_double(key, val);
      else
        throw unknown();
    } else if (section == "solver") {
      auto& v = c.solver;
      if (key == "L")
        v.L = to_double(key, val);
      else if (key == "N")
        v.N = static_cast<int>(to_int(key, val));
      else if (key == "lambda")
        v.lambda = to_double(key, val);
      else if (key == "tol")
        v.tol = to_double(key, val);
      else if (key == "max_iter")
        v.max_iter = static_cast<int>(to_int(key, val));
      else
        throw unknown();
    } else {
      if (key == "out_dir")
        c.output.out_dir = val;
      else if (key == "formats")
        c.output.formats = list_items(val);
      else
        throw unknown();
    }
  }
  validate_config(c);
  return c;
}

/// Provenance hash over everything that determines the numbers (output block excluded).
inline std::string config_hash(const ExperimentConfig& c)
{
  auto copy = c;
  copy.output = {};
  return io::hex64(io::fnv1a64(serialize_config(copy)));
}

} // namespace silt

#endif // SILT_CONFIG_HPP
