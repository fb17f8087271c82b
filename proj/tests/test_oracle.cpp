#include <doctest.h>

#include <cmath>

#include "dicke_oracle.hpp"
#include "srsim/ladder.hpp"
#include "srsim/propagator.hpp"
#include "srsim/units.hpp"

using namespace srsim;

TEST_SUITE_BEGIN("oracle");

TEST_CASE("dicke state normalization") {
  CHECK(oracle::dicke_norm(2, 0) == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-14));
  CHECK(oracle::dicke_norm(1, 1) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(oracle::dicke_norm(4, 0) == doctest::Approx(1.0 / std::sqrt(6.0)).epsilon(1e-14));

  // norm^2 times the number of permutations C(N, J+M) is 1.
  for (int n = 1; n <= 4; ++n) {
    for (int two_m = -n; two_m <= n; two_m += 2) {
      const int k = (n + two_m) / 2;
      double binom = 1.0;
      for (int i = 0; i < k; ++i) binom = binom * (n - i) / (i + 1);
      const double norm = oracle::dicke_norm(n, two_m);
      CHECK(norm * norm * binom == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("dicke states are unit vectors stepped down by S-") {
  for (int n : {2, 3, 4}) {
    const auto sm = oracle::collective_lowering(n, 2);
    for (int two_m = -n; two_m <= n; two_m += 2) {
      const auto psi = oracle::dicke_state(n, two_m, 2);
      CHECK(psi.norm() == doctest::Approx(1.0).epsilon(1e-12));
      if (two_m > -n) {
        // S-|J,M> = sqrt(J(J+1) - M(M-1)) |J,M-1>
        const auto below = oracle::dicke_state(n, two_m - 2, 2);
        const double coeff = std::sqrt(emission_weight(n, two_m));
        CHECK((sm * psi - coeff * below).norm() < 1e-12);
      }
    }
  }
}

TEST_CASE("exact single spin decay") {
  const double gamma = units::rate_from_mhz(12.2);
  std::vector<double> weights{0.0, 1.0};  // excited
  const auto rho0 = oracle::top_ladder_density(1, weights, 2);
  std::vector<double> times;
  for (int i = 0; i <= 20; ++i) times.push_back(i * 0.25 / gamma);
  const auto traj = oracle::evolve_exact(1, 2, {.gamma = gamma}, rho0, times);
  for (std::size_t k = 0; k < times.size(); ++k) {
    const double pop = oracle::top_ladder_population(traj[k], 1, 1, 2);
    CHECK(pop == doctest::Approx(std::exp(-gamma * times[k])).epsilon(1e-9));
    CHECK(traj[k].trace() == doctest::Approx(1.0).epsilon(1e-10));
  }
}

TEST_CASE("exact two-spin cascade hits the analytic middle population") {
  const double gamma = units::rate_from_mhz(9.0);
  const auto rho0 = oracle::top_ladder_density(2, {0.0, 0.0, 1.0}, 2);
  std::vector<double> times;
  for (int i = 0; i <= 30; ++i) times.push_back(i * 0.1 / gamma);
  const auto traj = oracle::evolve_exact(2, 2, {.gamma = gamma}, rho0, times);
  for (std::size_t k = 0; k < times.size(); ++k) {
    const double x = 2.0 * gamma * times[k];
    CHECK(oracle::top_ladder_population(traj[k], 2, 0, 2) ==
          doctest::Approx(x * std::exp(-x)).epsilon(1e-9));
  }
}

TEST_CASE("trace, hermiticity, and positivity are preserved with all channels on") {
  const oracle::OracleParams p{.gamma = units::rate_from_mhz(10.0),
                               .gamma_d = units::rate_from_mhz(60.0),
                               .gamma_isc = units::rate_from_mhz(4.0)};
  const auto rho0 = oracle::top_ladder_density(2, {1.0 / 3, 1.0 / 3, 1.0 / 3}, 3);
  std::vector<double> times{0.0, 5e-9, 20e-9, 60e-9, 150e-9};
  const auto traj = oracle::evolve_exact(2, 3, p, rho0, times);
  for (const auto& rho : traj) {
    CHECK(rho.trace() == doctest::Approx(1.0).epsilon(1e-10));
    CHECK((rho - rho.transpose()).cwiseAbs().maxCoeff() < 1e-10);
    CHECK(oracle::min_eigenvalue(rho) > -1e-10);
  }
}

TEST_CASE("brute force g2 values") {
  CHECK(oracle::brute_force_g2(2, oracle::top_ladder_density(2, {0, 0, 1}, 2), 2) ==
        doctest::Approx(1.0).epsilon(1e-12));  // 2 - 2/N at N=2
  const auto mixed3 = oracle::top_ladder_density(3, {0.25, 0.25, 0.25, 0.25}, 2);
  CHECK(oracle::brute_force_g2(3, mixed3, 2) == doctest::Approx(0.96).epsilon(1e-12));
  const auto excited1 = oracle::top_ladder_density(1, {0.0, 1.0}, 2);
  CHECK(oracle::brute_force_g2(1, excited1, 2) == doctest::Approx(0.0));
  CHECK_THROWS(oracle::brute_force_g2(1, oracle::top_ladder_density(1, {1.0, 0.0}, 2), 2));
}

TEST_CASE("rate equations are exact for collective decay plus ISC leakage") {
  // With no dephasing, local ISC removal maps top-ladder states of n spins
  // onto top-ladder states of n-1 spins, which is precisely the ladder
  // model's ISC term. Fluorescence from both engines must agree.
  const int n = 3;
  RateParams params;
  params.gamma = units::rate_from_mhz(7.0);
  params.gamma_isc_0 = units::rate_from_mhz(3.0);

  const LadderIndex index = build_index(n);
  const auto gen = build_rate_matrix(index, params, Spin::ms0);
  const auto v0 = initial_state(index, {.kind = InitialStateSpec::Kind::MaximallyMixedTopLadder});
  TimeGrid grid{.t_start = 0.0, .t_end = 80e-9, .n_points = 41};
  const Eigen::VectorXd f = emission_functional(index, params);
  const Eigen::MatrixXd series =
      functional_series(gen, grid.dt(), grid.n_points - 1, f, {state_vector(v0)});

  const auto rho0 =
      oracle::top_ladder_density(n, std::vector<double>(n + 1, 1.0 / (n + 1)), 3);
  const auto traj = oracle::evolve_exact(
      n, 3, {.gamma = params.gamma, .gamma_isc = params.gamma_isc_0}, rho0, grid.times());
  for (int k = 0; k < grid.n_points; ++k) {
    const double exact = params.gamma *
                         oracle::emission_expectation(traj[static_cast<std::size_t>(k)], n, 3);
    CHECK(series(k, 0) == doctest::Approx(exact).epsilon(1e-8));
  }
}

TEST_CASE("dephasing map deviation from true local dephasing is bounded and reported") {
  // The ladder model's dephasing+projection map is phenomenological; against
  // exact local sigma_z Lindblad dynamics it agrees qualitatively, not
  // exactly. Report the deviation band rather than asserting equality.
  const int n = 3;
  RateParams params;
  params.gamma = units::rate_from_mhz(10.0);
  params.gamma_d_0 = units::rate_from_mhz(50.0);

  const LadderIndex index = build_index(n);
  const auto gen = build_rate_matrix(index, params, Spin::ms0);
  const auto v0 = initial_state(index, {.kind = InitialStateSpec::Kind::MaximallyMixedTopLadder});
  TimeGrid grid{.t_start = 0.0, .t_end = 60e-9, .n_points = 61};
  const Eigen::VectorXd f = emission_functional(index, params);
  const Eigen::MatrixXd series =
      functional_series(gen, grid.dt(), grid.n_points - 1, f, {state_vector(v0)});

  const auto rho0 =
      oracle::top_ladder_density(n, std::vector<double>(n + 1, 1.0 / (n + 1)), 2);
  const auto traj = oracle::evolve_exact(
      n, 2, {.gamma = params.gamma, .gamma_d = params.gamma_d_0}, rho0, grid.times());

  double peak = 0.0, worst = 0.0;
  for (int k = 0; k < grid.n_points; ++k) {
    const double exact = params.gamma *
                         oracle::emission_expectation(traj[static_cast<std::size_t>(k)], n, 2);
    peak = std::max(peak, exact);
    worst = std::max(worst, std::abs(series(k, 0) - exact));
  }
  const double band = worst / peak;
  MESSAGE("dephasing map vs local sigma_z Lindblad: peak-normalized deviation = ", band);
  CHECK(band < 0.35);   // documented tolerance band, not an equality claim
  CHECK(band > 1e-6);   // the two dynamics genuinely differ
}

TEST_CASE("capability limits") {
  CHECK_THROWS(oracle::evolve_exact(5, 2, {.gamma = 1.0}, Eigen::MatrixXd::Identity(32, 32),
                                    {1e-9}));
  CHECK_THROWS(oracle::evolve_exact(2, 2, {.gamma = 1.0, .gamma_isc = 1.0},
                                    Eigen::MatrixXd::Identity(4, 4), {1e-9}));
}

TEST_SUITE_END();
