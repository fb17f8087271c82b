#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCore>
#include <string>
#include <vector>

#include "srsim/ladder.hpp"

namespace srsim {

struct TimeGrid {
  enum class Spacing { Linear, Log };
  double t_start = 0.0;  // seconds
  double t_end = 0.0;    // seconds
  int n_points = 0;
  Spacing spacing = Spacing::Linear;

  void validate() const;
  std::vector<double> times() const;
  bool uniform() const { return spacing == Spacing::Linear; }
  double dt() const { return (t_end - t_start) / (n_points - 1); }
};

/// Detector response. A Gaussian of the given FWHM, or a measured kernel
/// sampled at the trace bin spacing starting at zero lag. fwhm = 0 means an
/// ideal detector.
struct IrfSpec {
  enum class Shape { Gaussian, Measured };
  Shape shape = Shape::Gaussian;
  double fwhm = 0.0;            // seconds, Gaussian only
  std::vector<double> kernel;   // Measured only

  void validate() const;
};

struct FluorescenceTrace {
  std::vector<double> times;  // seconds
  std::vector<double> rates;  // photons/s, or arbitrary units once scaled
  std::string provenance;
};

/// [P..., n_nc, dark] of the extended linear system.
Eigen::VectorXd state_vector(const LadderState& state);
LadderState state_from_vector(const Eigen::VectorXd& v, Spin sigma);

/// Emission functional f with f.dot(state_vector) = fluorescence rate:
/// gamma on n_nc, gamma*(J(J+1)-M(M-1)) on each ladder entry, 0 on dark.
Eigen::VectorXd emission_functional(const LadderIndex& index, const RateParams& params);

/// Instantaneous fluorescence rate gamma*(n_nc + sum (J(J+1)-M(M-1)) P_{J,M}).
double fluorescence(const LadderIndex& index, const LadderState& state,
                    const RateParams& params);

/// Trajectory of exp(A t) v0 over the grid. Dense matrix exponentiation with
/// a single step operator on uniform grids up to kDenseDimensionLimit;
/// adaptive L-stable SDIRK2 integration on the sparse generator otherwise.
/// Populations in [-1e-12, 0) are clamped to zero; anything more negative or
/// non-finite raises NumericalError.
std::vector<LadderState> evolve(const Eigen::SparseMatrix<double>& generator,
                                const LadderState& v0, const TimeGrid& grid);

inline constexpr int kDenseDimensionLimit = 2000;

/// f^T exp(A k dt) v0_i for k = 0..n_steps, one column per initial vector.
/// Shares one step-operator exponential across all columns, so evaluating a
/// whole family of domain sizes costs a single dense exponential.
Eigen::MatrixXd functional_series(const Eigen::SparseMatrix<double>& generator,
                                  double dt, int n_steps, const Eigen::VectorXd& f,
                                  const std::vector<Eigen::VectorXd>& initial_states);

/// Peak of F(t) for N spins starting fully excited with collective decay
/// only. Preconditions per the superradiant-burst analysis: gamma_d and
/// gamma_isc must be zero.
double peak_fluorescence(int n_spins, const RateParams& params);

/// Discrete convolution with the unit-sum IRF kernel, zero-padded before
/// t = 0. Requires a uniform grid.
FluorescenceTrace convolve_irf(const FluorescenceTrace& trace, const IrfSpec& irf);

/// The kernel weights used by convolve_irf for the given bin width.
std::vector<double> irf_kernel(const IrfSpec& irf, double bin_width);

}  // namespace srsim
