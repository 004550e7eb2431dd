#ifndef SILT_RNG_HPP
#define SILT_RNG_HPP

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace silt {

/// SplitMix64 finalizer. Used only to derive substream seeds.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept
{
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

/// Seed of substream `stream_id` under base seed `seed`.
///
/// The mapping is fixed: splitmix64(splitmix64(seed) ^ splitmix64(stream_id + C))
/// with C the golden-ratio increment, so substreams are reproducible on any
/// platform and do not depend on the order in which they are requested.
constexpr std::uint64_t substream_seed(std::uint64_t seed, std::uint64_t stream_id) noexcept
{
  return splitmix64(splitmix64(seed) ^ splitmix64(stream_id + 0x9E3779B97F4A7C15ull));
}

/// Random source for one substream.
///
/// The engine is std::mt19937_64, whose state transition is fixed by the C++
/// standard. All conversions to real variates are done here (not through
/// <random> distributions, whose algorithms are implementation-defined) so
/// the produced doubles are identical across standard libraries.
class Rng {
public:
  Rng(std::uint64_t seed, std::uint64_t stream_id)
    : engine_(substream_seed(seed, stream_id))
  {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform on the open interval (0, 1).
  double uniform_open() { return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53; }

  /// Standard exponential, mean 1.
  double exponential() { return -std::log(uniform_open()); }

  /// Standard normal by Box-Muller; the second variate of each pair is cached.
  double normal()
  {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double r = std::sqrt(-2.0 * std::log(uniform_open()));
    const double theta = 2.0 * std::numbers::pi * uniform();
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

} // namespace silt

#endif // SILT_RNG_HPP
