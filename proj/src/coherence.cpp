#include "srsim/coherence.hpp"

#include <algorithm>
#include <cmath>

#include "srsim/errors.hpp"

namespace srsim {

double g2_zero_allup(int n_spins) {
  if (n_spins < 1) throw DomainError("g2_zero_allup: N must be >= 1");
  return 2.0 - 2.0 / n_spins;
}

double g2_zero_mixed(int n_spins) {
  if (n_spins < 1) throw DomainError("g2_zero_mixed: N must be >= 1");
  const double n = n_spins;
  return 6.0 * (n - 1.0) * (n + 3.0) / (5.0 * n * (n + 2.0));
}

double g2_zero_ensemble(const DomainEnsemble& ensemble) {
  ensemble.validate();
  double g2 = 0.0;
  for (const auto* w : {&ensemble.weights0, &ensemble.weights1}) {
    for (const auto& [n, p] : *w) g2 += p * g2_zero_mixed(n);
  }
  return g2;
}

double g2_zero_from_state(const LadderIndex& index, const LadderState& state) {
  double num = 0.0;
  double den = 0.0;
  for (int i = 0; i < index.dimension(); ++i) {
    const double p = state.populations[static_cast<std::size_t>(i)];
    if (p == 0.0) continue;
    const auto [two_j, two_m] = index.jm_at(i);
    const double w1 = emission_weight(two_j, two_m);
    if (w1 == 0.0) continue;
    den += p * w1;
    // Second factor is the emission weight one rung down the same ladder.
    num += p * w1 * emission_weight(two_j, two_m - 2);
  }
  if (!(den > 0.0)) throw DomainError("g2_zero_from_state: state carries no excitation");
  return num / (den * den);
}

namespace {

// S- rho S+ restricted to the diagonal sector, unnormalized. Returns the
// jumped populations and the norm (= emission weight of the input state).
std::pair<Eigen::VectorXd, double> conditional_after_emission(const LadderIndex& index,
                                                              const LadderState& state) {
  if (std::abs(state.n_nc) > 1e-12) {
    throw DomainError("g2: conditional evolution requires n_nc = 0 at t = 0");
  }
  Eigen::VectorXd jumped = Eigen::VectorXd::Zero(index.dimension() + 2);
  double norm = 0.0;
  for (int i = 0; i < index.dimension(); ++i) {
    const double p = state.populations[static_cast<std::size_t>(i)];
    if (p == 0.0) continue;
    const auto [two_j, two_m] = index.jm_at(i);
    const double w1 = emission_weight(two_j, two_m);
    if (w1 == 0.0) continue;
    jumped[index.index_of(two_j, two_m - 2)] += w1 * p;
    norm += w1 * p;
  }
  if (!(norm > 0.0)) throw DomainError("g2: state carries no excitation");
  jumped /= norm;
  return {jumped, norm};
}

}  // namespace

G2Curve g2_delayed(const LadderIndex& index, const LadderState& state0,
                   const RateParams& params, const TimeGrid& delays) {
  delays.validate();
  const auto gen = build_rate_matrix(index, params, state0.sigma);
  const auto [conditional, norm] = conditional_after_emission(index, state0);
  const Eigen::VectorXd unconditional = state_vector(state0);
  const Eigen::VectorXd f = emission_functional(index, params);

  G2Curve curve;
  curve.kind = G2Curve::Kind::Delayed;
  curve.delays = delays.times();
  curve.values.resize(curve.delays.size());

  if (delays.uniform() && delays.t_start == 0.0) {
    const Eigen::MatrixXd series = functional_series(
        gen, delays.dt(), delays.n_points - 1, f, {conditional, unconditional});
    for (std::size_t k = 0; k < curve.delays.size(); ++k) {
      const auto row = static_cast<Eigen::Index>(k);
      curve.values[k] = series(row, 1) > 0.0 ? series(row, 0) / series(row, 1) : 0.0;
    }
  } else {
    const auto cond_traj = evolve(gen, state_from_vector(conditional, state0.sigma), delays);
    const auto unc_traj = evolve(gen, state0, delays);
    for (std::size_t k = 0; k < curve.delays.size(); ++k) {
      const double num = fluorescence(index, cond_traj[k], params);
      const double den = fluorescence(index, unc_traj[k], params);
      curve.values[k] = den > 0.0 ? num / den : 0.0;
    }
  }
  return curve;
}

G2Curve g2_time_integrated(const LadderIndex& index, const LadderState& state0,
                           const RateParams& params, const std::vector<double>& taus,
                           double window) {
  if (taus.empty()) throw DomainError("g2_time_integrated: no tau values");
  double tau_max = 0.0;
  for (double t : taus) {
    if (!(t > 0.0)) throw DomainError("g2_time_integrated: tau values must be > 0");
    tau_max = std::max(tau_max, t);
  }
  if (window <= 0.0) window = tau_max;
  if (tau_max > window * (1.0 + 1e-12)) {
    throw DomainError("g2_time_integrated: tau beyond simulated window");
  }

  const auto gen = build_rate_matrix(index, params, state0.sigma);
  const auto [conditional, norm] = conditional_after_emission(index, state0);
  const Eigen::VectorXd unconditional = state_vector(state0);
  const Eigen::VectorXd f = emission_functional(index, params);

  const int n_steps = 8192;
  const double dt = window / n_steps;
  const Eigen::MatrixXd series =
      functional_series(gen, dt, n_steps, f, {conditional, unconditional});

  // Cumulative trapezoid integrals of both intensities.
  std::vector<double> cum_num(static_cast<std::size_t>(n_steps) + 1, 0.0);
  std::vector<double> cum_den(cum_num.size(), 0.0);
  for (int k = 1; k <= n_steps; ++k) {
    const auto i = static_cast<std::size_t>(k);
    cum_num[i] = cum_num[i - 1] + 0.5 * dt * (series(k - 1, 0) + series(k, 0));
    cum_den[i] = cum_den[i - 1] + 0.5 * dt * (series(k - 1, 1) + series(k, 1));
  }
  const auto interp = [&](const std::vector<double>& c, double t) {
    const double x = std::clamp(t / dt, 0.0, static_cast<double>(n_steps));
    const auto k = static_cast<std::size_t>(x);
    if (k >= static_cast<std::size_t>(n_steps)) return c.back();
    return c[k] + (x - k) * (c[k + 1] - c[k]);
  };

  G2Curve curve;
  curve.kind = G2Curve::Kind::TimeIntegrated;
  curve.delays = taus;
  curve.values.resize(taus.size());
  for (std::size_t i = 0; i < taus.size(); ++i) {
    const double num = interp(cum_num, taus[i]);
    const double den = interp(cum_den, taus[i]);
    curve.values[i] = den > 0.0 ? num / den : 0.0;
  }
  return curve;
}

}  // namespace srsim
