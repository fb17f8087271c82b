#pragma once

#include <Eigen/SparseCore>
#include <optional>
#include <utility>
#include <vector>

namespace srsim {

/// Spin projection of the NV excited state. The m_s = +1 and -1 sublevels are
/// degenerate at room temperature and are treated as a single population.
enum class Spin { ms0, ms1 };

/// Per-projection physical rates, all angular frequencies in rad/s.
struct RateParams {
  double gamma = 0.0;        // radiative decay rate
  double gamma_isc_0 = 0.0;  // intersystem-crossing rate, m_s = 0
  double gamma_isc_1 = 0.0;  // intersystem-crossing rate, m_s = +-1
  double gamma_d_0 = 0.0;    // local dephasing rate, m_s = 0
  double gamma_d_1 = 0.0;    // local dephasing rate, m_s = +-1

  double isc(Spin s) const { return s == Spin::ms0 ? gamma_isc_0 : gamma_isc_1; }
  double dephasing(Spin s) const { return s == Spin::ms0 ? gamma_d_0 : gamma_d_1; }

  /// Throws ValidationError unless gamma > 0 and all other rates are >= 0.
  void validate() const;
};

/// Bulk-diamond NV rates: gamma/2pi = 12.2 MHz, ISC rates 1.8 / 9.4 MHz for
/// m_s = 0 / +-1. Dephasing left at zero.
RateParams bulk_nv_rates();

/// Index over the chain of collective subspaces for up to N spins:
/// J in {1/2, 1, ..., N/2}, M in {-J, ..., J}. Half-integers are carried as
/// doubled integers (two_j = 2J, two_m = 2M) so lookups are exact.
///
/// Blocks are ordered by descending J and, within a block, descending M, so
/// index 0 is the fully excited state and every decay / dephasing / leakage
/// flow points from a lower index to a higher one. The rate matrix built on
/// this layout is lower triangular.
class LadderIndex {
 public:
  /// Largest N accepted. Above ~70 centres dense propagation leaves the
  /// practical regime, but the index itself stays cheap.
  static constexpr int kMaxSpins = 80;

  explicit LadderIndex(int max_spins);

  int max_spins() const { return max_spins_; }
  /// Number of (J, M) pairs: (N^2 + 3N) / 2.
  int dimension() const { return static_cast<int>(jm_.size()); }

  int index_of(int two_j, int two_m) const;
  bool contains(int two_j, int two_m) const;
  /// (two_j, two_m) of an index.
  std::pair<int, int> jm_at(int index) const;

  /// First index of the J block (states ordered M = J down to M = -J).
  int block_start(int two_j) const;

 private:
  int max_spins_ = 0;
  std::vector<int> block_start_;               // keyed by two_j
  std::vector<std::pair<int, int>> jm_;        // reverse map
};

LadderIndex build_index(int max_spins);

/// gamma * (J(J+1) - M(M-1)): the collective emission rate out of |J,M>.
/// Also the emission weight <S+ S-> of that state.
double collective_rate(int two_j, int two_m, double gamma);

/// J(J+1) - M(M-1), exact in integer arithmetic.
double emission_weight(int two_j, int two_m);

/// Populations over the collective subspaces plus the two bookkeeping
/// scalars: n_nc counts excited spins that have dephased out of every
/// collective subspace, dark accumulates the probability that leaks out of
/// the J = 1/2 ladder through the ISC channel.
struct LadderState {
  std::vector<double> populations;
  double n_nc = 0.0;
  double dark = 0.0;
  Spin sigma = Spin::ms0;

  double total_population() const;
};

struct InitialStateSpec {
  enum class Kind { MaximallyMixedTopLadder, AllUp, Custom };
  Kind kind = Kind::MaximallyMixedTopLadder;
  /// Custom weights over the top ladder, ordered M = -J, ..., +J.
  std::optional<std::vector<double>> custom_weights;
};

LadderState initial_state(const LadderIndex& index, const InitialStateSpec& spec,
                          Spin sigma = Spin::ms0);

/// Generator A for d/dt [P_{J,M}..., n_nc, dark] = A [P..., n_nc, dark].
///
/// Per column (J, M): collective loss at gamma*(J(J+1)-M(M-1)) feeding
/// (J, M-1); dephasing+projection loss at 2J*gamma_d*(1-(M/J)^2) feeding
/// (J-1/2, M-1/2) and sourcing one ejected spin into n_nc; ISC loss at
/// (J+M)*gamma_isc feeding (J-1/2, M-1/2), or the dark sink when J = 1/2.
/// n_nc decays at gamma + gamma_isc. Lower triangular in this index layout.
Eigen::SparseMatrix<double> build_rate_matrix(const LadderIndex& index,
                                              const RateParams& params, Spin sigma);

/// Rate at which spins enter n_nc: gamma_d * sum 2J (1 - (M/J)^2) P_{J,M}.
double dephasing_outflux(const LadderIndex& index, const LadderState& state,
                         const RateParams& params);

}  // namespace srsim
