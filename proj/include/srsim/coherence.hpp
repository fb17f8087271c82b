#pragma once

#include <vector>

#include "srsim/ensemble.hpp"
#include "srsim/ladder.hpp"
#include "srsim/propagator.hpp"

namespace srsim {

struct G2Curve {
  enum class Kind { ZeroDelay, Delayed, TimeIntegrated };
  std::vector<double> delays;  // seconds
  std::vector<double> values;
  Kind kind = Kind::Delayed;
};

/// g2(0) = 2 - 2/N for the fully excited initial state.
double g2_zero_allup(int n_spins);

/// g2(0) = 6(N-1)(N+3) / (5N(N+2)) for the evenly mixed top ladder.
double g2_zero_mixed(int n_spins);

/// Ensemble-weighted zero-delay coherence: sum of p_N * g2_zero_mixed(N)
/// over both spin projections.
double g2_zero_ensemble(const DomainEnsemble& ensemble);

/// g2(0) of an arbitrary diagonal ladder state:
///   sum P w1(J,M) w1(J,M-1) / (sum P w1(J,M))^2
/// with w1 = J(J+1) - M(M-1), i.e. <S+S+S-S-> / <S+S->^2.
double g2_zero_from_state(const LadderIndex& index, const LadderState& state);

/// Normalized two-time coherence after a pulsed excitation, from the
/// quantum-regression prescription restricted to the diagonal sector:
/// emit one photon (jump P_{J,M} <- w1(J,M+1) P_{J,M+1}, renormalized),
/// propagate, and take the ratio of conditional to unconditional emission
/// weights. No re-excitation is modeled, so the curve covers the burst
/// timescale of a single pulse.
G2Curve g2_delayed(const LadderIndex& index, const LadderState& state0,
                   const RateParams& params, const TimeGrid& delays);

/// Time-integrated autocorrelation: ratio of the windowed integrals of the
/// conditional and unconditional intensities,
///   g2bar(tau) = int_0^tau G2(t) dt / int_0^tau <I(0)><I(t)> dt,
/// evaluated for each requested tau. window = 0 integrates up to max(taus).
G2Curve g2_time_integrated(const LadderIndex& index, const LadderState& state0,
                           const RateParams& params, const std::vector<double>& taus,
                           double window = 0.0);

}  // namespace srsim
