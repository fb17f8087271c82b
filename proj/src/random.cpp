#include "srsim/random.hpp"

#include <cmath>
#include <numbers>

#include "srsim/errors.hpp"

namespace srsim {

std::uint64_t Rng::next_u64() {
  // splitmix64 (Steele, Lea, Flood 2014); public-domain reference constants.
  std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

double Rng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::normal() {
  if (have_spare_) {
    have_spare_ = false;
    return spare_;
  }
  double u1 = 0.0;
  do {
    u1 = uniform();
  } while (u1 <= 0.0);
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(theta);
  have_spare_ = true;
  return r * std::cos(theta);
}

std::uint64_t Rng::poisson(double mean) {
  if (!(mean >= 0.0)) throw DomainError("poisson: mean must be >= 0");
  if (mean == 0.0) return 0;
  if (mean < 64.0) {
    const double limit = std::exp(-mean);
    std::uint64_t k = 0;
    double prod = uniform();
    while (prod > limit) {
      ++k;
      prod *= uniform();
    }
    return k;
  }
  const double v = mean + std::sqrt(mean) * normal();
  return v <= 0.0 ? 0 : static_cast<std::uint64_t>(std::llround(v));
}

std::vector<double> poisson_sample(const std::vector<double>& expected, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> out(expected.size());
  for (std::size_t i = 0; i < expected.size(); ++i) {
    out[i] = static_cast<double>(rng.poisson(expected[i]));
  }
  return out;
}

}  // namespace srsim
