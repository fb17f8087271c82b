#pragma once

#include <Eigen/Dense>

namespace srsim {

/// Excited-state lifetime ratio T_{+-1}/T_0 = (1 + f0) / (1 + f1) with
/// f_sigma the ISC-to-radiative rate ratio.
double isc_lifetime_ratio(double f0, double f1);

struct DipoleGeometry {
  double separation = 0.0;  // meters
  Eigen::Vector3d d1 = Eigen::Vector3d::UnitX();
  Eigen::Vector3d d2 = Eigen::Vector3d::UnitX();
  Eigen::Vector3d n_hat = Eigen::Vector3d::UnitZ();
  double branching_b = 0.03;   // ZPL branching ratio
  double refractive_n = 2.4;   // diamond
  double wavelength = 639e-9;  // meters, ZPL transition
  double gamma = 0.0;          // rad/s

  void validate() const;
};

/// Near-field dipole-dipole interaction strength (rad/s):
///   V_dd = 3 gamma b / (4 (n k0 dr)^3) * (d1.d2 - 3 (d1.n)(d2.n)).
double dipole_dipole_strength(const DipoleGeometry& geom);

/// How to turn a number density into a "mean separation".
enum class SeparationConvention {
  CubeRoot,            // rho^(-1/3)
  WignerSeitzDiameter  // (6 / (pi rho))^(1/3), twice the Wigner-Seitz radius
};

/// Mean emitter separation from number density (per m^3). The default
/// Wigner-Seitz diameter gives 12.4 nm at 1e24 m^-3; the bare cube root
/// gives 10 nm.
double mean_separation(double density,
                       SeparationConvention convention = SeparationConvention::WignerSeitzDiameter);

}  // namespace srsim
