#include "srsim/physics.hpp"

#include <cmath>
#include <numbers>

#include "srsim/errors.hpp"

namespace srsim {

double isc_lifetime_ratio(double f0, double f1) {
  if (f0 < 0.0 || f1 < 0.0) throw DomainError("isc_lifetime_ratio: ratios must be >= 0");
  return (1.0 + f0) / (1.0 + f1);
}

void DipoleGeometry::validate() const {
  if (!(separation > 0.0)) throw DomainError("dipole geometry: separation must be > 0");
  for (const auto* v : {&d1, &d2, &n_hat}) {
    if (std::abs(v->norm() - 1.0) > 1e-9) {
      throw DomainError("dipole geometry: orientation vectors must be unit length");
    }
  }
  if (!(branching_b > 0.0)) throw DomainError("dipole geometry: branching ratio must be > 0");
  if (!(refractive_n > 0.0)) throw DomainError("dipole geometry: refractive index must be > 0");
  if (!(wavelength > 0.0)) throw DomainError("dipole geometry: wavelength must be > 0");
  if (!(gamma > 0.0)) throw DomainError("dipole geometry: gamma must be > 0");
}

double dipole_dipole_strength(const DipoleGeometry& geom) {
  geom.validate();
  const double k0 = 2.0 * std::numbers::pi / geom.wavelength;
  const double x = geom.refractive_n * k0 * geom.separation;
  const double angular =
      geom.d1.dot(geom.d2) - 3.0 * geom.d1.dot(geom.n_hat) * geom.d2.dot(geom.n_hat);
  return 3.0 * geom.gamma * geom.branching_b / (4.0 * x * x * x) * angular;
}

double mean_separation(double density, SeparationConvention convention) {
  if (!(density > 0.0)) throw DomainError("mean_separation: density must be > 0");
  switch (convention) {
    case SeparationConvention::CubeRoot:
      return std::cbrt(1.0 / density);
    case SeparationConvention::WignerSeitzDiameter:
      return std::cbrt(6.0 / (std::numbers::pi * density));
  }
  throw DomainError("mean_separation: unknown convention");
}

}  // namespace srsim
