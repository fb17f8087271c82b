#pragma once

// Brute-force reference engine for small spin ensembles: exact density-matrix
// evolution in the full product space under collective decay, local sigma_z
// dephasing, and local ISC leakage to a third dark level. Everything here is
// integrated with an adaptive Runge-Kutta stepper, deliberately sharing no
// propagation path with the production code it validates.

#include <Eigen/Dense>
#include <vector>

namespace srsim::oracle {

/// Normalization of the symmetric N-spin state with 2M = two_m:
/// sqrt((J+M)!(J-M)!/(2J)!), J = N/2.
double dicke_norm(int n_spins, int two_m);

/// |J=N/2, M> in the product basis. levels = 2 for {g,e}, 3 for {g,e,d}.
Eigen::VectorXd dicke_state(int n_spins, int two_m, int levels);

/// Collective lowering operator sum_j |g><e|_j.
Eigen::MatrixXd collective_lowering(int n_spins, int levels);

/// Density matrix diagonal in the top Dicke ladder, weights[k] on
/// M = -J + k (k = 0..N).
Eigen::MatrixXd top_ladder_density(int n_spins, const std::vector<double>& weights,
                                   int levels);

struct OracleParams {
  double gamma = 0.0;      // collective radiative rate
  double gamma_d = 0.0;    // local dephasing rate (ge-coherence decay rate)
  double gamma_isc = 0.0;  // local leakage |e> -> |d> (requires levels = 3)
};

/// rho(t) at the requested times. N <= 4; levels = 3 is required when
/// gamma_isc > 0. Adaptive RK45 (Dormand-Prince) with tight tolerances.
std::vector<Eigen::MatrixXd> evolve_exact(int n_spins, int levels, const OracleParams& p,
                                          const Eigen::MatrixXd& rho0,
                                          const std::vector<double>& times);

/// <J=N/2, M| rho |J=N/2, M>.
double top_ladder_population(const Eigen::MatrixXd& rho, int n_spins, int two_m, int levels);

/// Tr[S+ S- rho]: emission weight of the state.
double emission_expectation(const Eigen::MatrixXd& rho, int n_spins, int levels);

/// Tr[S+ S+ S- S- rho] / Tr[S+ S- rho]^2.
double brute_force_g2(int n_spins, const Eigen::MatrixXd& rho0, int levels);

/// Two-time regression: g2(t) = Tr[S+S- e^{Lt}(S- rho0 S+)] /
/// (Tr[S+S- rho0] * Tr[S+S- rho(t)]).
std::vector<double> regression_g2(int n_spins, int levels, const OracleParams& p,
                                  const Eigen::MatrixXd& rho0,
                                  const std::vector<double>& times);

/// Smallest eigenvalue of the Hermitian part (positivity check).
double min_eigenvalue(const Eigen::MatrixXd& rho);

}  // namespace srsim::oracle
