#pragma once

#include <cstdint>
#include <vector>

namespace srsim {

/// Small deterministic PRNG (splitmix64 core). We roll our own so that
/// seeded runs are reproducible across standard libraries and platforms,
/// which the fitting round-trip tests rely on.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64();
  /// Uniform in [0, 1).
  double uniform();
  /// Standard normal deviate (Box-Muller, one value per call).
  double normal();
  /// Poisson deviate with the given mean. Exact multiplication method for
  /// small means, rounded normal approximation above 64 (counts there are
  /// in the thousands, where the approximation error is far below shot
  /// noise).
  std::uint64_t poisson(double mean);

 private:
  std::uint64_t state_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

/// Applies Poisson noise bin-wise to a vector of expected counts.
std::vector<double> poisson_sample(const std::vector<double>& expected, std::uint64_t seed);

}  // namespace srsim
