#include <doctest.h>

#include <cmath>

#include "srsim/errors.hpp"
#include "srsim/physics.hpp"
#include "srsim/random.hpp"
#include "srsim/units.hpp"

using namespace srsim;

TEST_SUITE_BEGIN("physics");

TEST_CASE("ISC lifetime ratio") {
  CHECK(isc_lifetime_ratio(0.3, 0.3) == doctest::Approx(1.0));
  CHECK(isc_lifetime_ratio(0.5, 0.0) == doctest::Approx(1.5));
  // Bulk rates: f0 = 1.8/12.2, f1 = 9.4/12.2 -> 14/21.6.
  const double ratio = isc_lifetime_ratio(1.8 / 12.2, 9.4 / 12.2);
  CHECK(ratio == doctest::Approx(14.0 / 21.6).epsilon(1e-12));
  CHECK(ratio == doctest::Approx(0.648148).epsilon(1e-4));
  CHECK_THROWS_AS(isc_lifetime_ratio(-0.1, 0.2), DomainError);
}

TEST_CASE("ISC lifetime ratio monotonicity") {
  Rng rng(41);
  for (int i = 0; i < 200; ++i) {
    const double f0 = rng.uniform();
    const double f1 = rng.uniform();
    const double d = 0.05 + 0.2 * rng.uniform();
    CHECK(isc_lifetime_ratio(f0 + d, f1) > isc_lifetime_ratio(f0, f1));
    CHECK(isc_lifetime_ratio(f0, f1 + d) < isc_lifetime_ratio(f0, f1));
  }
}

namespace {

DipoleGeometry reference_geometry(double separation_nm) {
  DipoleGeometry g;
  g.separation = units::meters_from_nm(separation_nm);
  g.d1 = Eigen::Vector3d::UnitX();
  g.d2 = Eigen::Vector3d::UnitX();
  g.n_hat = Eigen::Vector3d::UnitZ();  // collinear dipoles, perpendicular axis
  g.gamma = units::rate_from_mhz(5.0);
  return g;
}

}  // namespace

TEST_CASE("dipole-dipole strength reproduces the 8.56 MHz reference point") {
  const double v = dipole_dipole_strength(reference_geometry(10.0));
  CHECK(units::mhz_from_rate(v) == doctest::Approx(8.56).epsilon(0.01));
}

TEST_CASE("orthogonal dipoles perpendicular to the axis do not interact") {
  auto g = reference_geometry(10.0);
  g.d2 = Eigen::Vector3d::UnitY();
  CHECK(dipole_dipole_strength(g) == doctest::Approx(0.0));
}

TEST_CASE("strength falls as the separation cubed") {
  CHECK(units::mhz_from_rate(dipole_dipole_strength(reference_geometry(20.0))) ==
        doctest::Approx(8.56 / 8.0).epsilon(0.01));
  const double v10 = dipole_dipole_strength(reference_geometry(10.0));
  for (double r : {5.0, 15.0, 40.0}) {
    const double v = dipole_dipole_strength(reference_geometry(r));
    CHECK(v * std::pow(r, 3) == doctest::Approx(v10 * 1000.0).epsilon(1e-9));
  }
}

TEST_CASE("strength is linear in gamma and branching ratio") {
  auto g = reference_geometry(12.0);
  const double v = dipole_dipole_strength(g);
  g.gamma *= 3.0;
  CHECK(dipole_dipole_strength(g) == doctest::Approx(3.0 * v).epsilon(1e-12));
  g.branching_b *= 0.5;
  CHECK(dipole_dipole_strength(g) == doctest::Approx(1.5 * v).epsilon(1e-12));
}

TEST_CASE("angular factor stays within [-2, 2] for random orientations") {
  Rng rng(97);
  const auto random_unit = [&rng] {
    Eigen::Vector3d v;
    do {
      v = Eigen::Vector3d(2 * rng.uniform() - 1, 2 * rng.uniform() - 1,
                          2 * rng.uniform() - 1);
    } while (v.norm() < 1e-3);
    return v.normalized();
  };
  auto g = reference_geometry(10.0);
  const double scale = std::abs(dipole_dipole_strength(reference_geometry(10.0)));
  for (int i = 0; i < 1000; ++i) {
    g.d1 = random_unit();
    g.d2 = random_unit();
    g.n_hat = random_unit();
    const double angular = dipole_dipole_strength(g) / scale;
    CHECK(angular >= -2.0 - 1e-9);
    CHECK(angular <= 2.0 + 1e-9);
  }
}

TEST_CASE("geometry validation") {
  auto g = reference_geometry(10.0);
  g.separation = 0.0;
  CHECK_THROWS_AS(dipole_dipole_strength(g), DomainError);
  g = reference_geometry(10.0);
  g.d1 = Eigen::Vector3d(1.0, 1.0, 0.0);  // not normalized
  CHECK_THROWS_AS(dipole_dipole_strength(g), DomainError);
}

TEST_CASE("mean separation conventions") {
  // 1e24 m^-3: Wigner-Seitz diameter lands on the quoted ~12 nm; the bare
  // cube root gives 10 nm.
  const double ws = mean_separation(1e24);
  CHECK(units::nm_from_meters(ws) == doctest::Approx(12.4).epsilon(0.01));
  CHECK(units::nm_from_meters(ws) > 11.5);
  CHECK(units::nm_from_meters(ws) < 13.0);
  const double cr = mean_separation(1e24, SeparationConvention::CubeRoot);
  CHECK(units::nm_from_meters(cr) == doctest::Approx(10.0).epsilon(1e-9));

  // Cube-root scaling: an 8x dilution doubles the separation.
  for (auto conv : {SeparationConvention::CubeRoot, SeparationConvention::WignerSeitzDiameter}) {
    CHECK(mean_separation(1e24 / 8.0, conv) ==
          doctest::Approx(2.0 * mean_separation(1e24, conv)).epsilon(1e-12));
  }

  // Main-text density, bare cube root.
  CHECK(units::nm_from_meters(mean_separation(3e24, SeparationConvention::CubeRoot)) ==
        doctest::Approx(std::cbrt(1.0 / 3.0) * 10.0).epsilon(1e-9));

  CHECK_THROWS_AS(mean_separation(0.0), DomainError);
}

TEST_SUITE_END();
