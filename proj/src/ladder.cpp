#include "srsim/ladder.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "srsim/errors.hpp"
#include "srsim/units.hpp"

namespace srsim {

void RateParams::validate() const {
  if (!(gamma > 0.0)) throw ValidationError("params.gamma: must be > 0");
  if (gamma_isc_0 < 0.0) throw ValidationError("params.gamma_isc_0: must be >= 0");
  if (gamma_isc_1 < 0.0) throw ValidationError("params.gamma_isc_1: must be >= 0");
  if (gamma_d_0 < 0.0) throw ValidationError("params.gamma_d_0: must be >= 0");
  if (gamma_d_1 < 0.0) throw ValidationError("params.gamma_d_1: must be >= 0");
}

RateParams bulk_nv_rates() {
  RateParams p;
  p.gamma = units::rate_from_mhz(12.2);
  p.gamma_isc_0 = units::rate_from_mhz(1.8);
  p.gamma_isc_1 = units::rate_from_mhz(9.4);
  return p;
}

LadderIndex::LadderIndex(int max_spins) : max_spins_(max_spins) {
  if (max_spins < 1 || max_spins > kMaxSpins) {
    throw DomainError("ladder: max_spins must be in [1, " + std::to_string(kMaxSpins) +
                      "], got " + std::to_string(max_spins));
  }
  block_start_.assign(max_spins + 1, -1);
  jm_.reserve((max_spins * max_spins + 3 * max_spins) / 2);
  for (int two_j = max_spins; two_j >= 1; --two_j) {
    block_start_[two_j] = static_cast<int>(jm_.size());
    for (int two_m = two_j; two_m >= -two_j; two_m -= 2) {
      jm_.emplace_back(two_j, two_m);
    }
  }
}

bool LadderIndex::contains(int two_j, int two_m) const {
  return two_j >= 1 && two_j <= max_spins_ && std::abs(two_m) <= two_j &&
         (two_j - two_m) % 2 == 0;
}

int LadderIndex::index_of(int two_j, int two_m) const {
  if (!contains(two_j, two_m)) {
    throw DomainError("ladder: no state with 2J=" + std::to_string(two_j) +
                      ", 2M=" + std::to_string(two_m));
  }
  return block_start_[two_j] + (two_j - two_m) / 2;
}

std::pair<int, int> LadderIndex::jm_at(int index) const {
  if (index < 0 || index >= dimension()) throw DomainError("ladder: index out of range");
  return jm_[static_cast<std::size_t>(index)];
}

int LadderIndex::block_start(int two_j) const {
  if (two_j < 1 || two_j > max_spins_) throw DomainError("ladder: 2J out of range");
  return block_start_[two_j];
}

LadderIndex build_index(int max_spins) { return LadderIndex(max_spins); }

double emission_weight(int two_j, int two_m) {
  // J(J+1) - M(M-1) = (2J(2J+2) - 2M(2M-2)) / 4, exact for N <= 80.
  const long long num = static_cast<long long>(two_j) * (two_j + 2) -
                        static_cast<long long>(two_m) * (two_m - 2);
  return static_cast<double>(num) / 4.0;
}

double collective_rate(int two_j, int two_m, double gamma) {
  if (std::abs(two_m) > two_j) throw DomainError("collective_rate: |M| > J");
  return gamma * emission_weight(two_j, two_m);
}

double LadderState::total_population() const {
  return std::accumulate(populations.begin(), populations.end(), 0.0);
}

LadderState initial_state(const LadderIndex& index, const InitialStateSpec& spec,
                          Spin sigma) {
  const int n = index.max_spins();
  LadderState state;
  state.sigma = sigma;
  state.populations.assign(index.dimension(), 0.0);

  switch (spec.kind) {
    case InitialStateSpec::Kind::MaximallyMixedTopLadder:
      for (int two_m = n; two_m >= -n; two_m -= 2) {
        state.populations[index.index_of(n, two_m)] = 1.0 / (n + 1);
      }
      break;
    case InitialStateSpec::Kind::AllUp:
      state.populations[index.index_of(n, n)] = 1.0;
      break;
    case InitialStateSpec::Kind::Custom: {
      if (!spec.custom_weights) {
        throw ValidationError("initial_state.custom_weights: missing");
      }
      const auto& w = *spec.custom_weights;
      if (static_cast<int>(w.size()) != n + 1) {
        throw ValidationError("initial_state.custom_weights: expected " +
                              std::to_string(n + 1) + " entries, got " +
                              std::to_string(w.size()));
      }
      double sum = 0.0;
      for (double x : w) {
        if (x < 0.0) throw ValidationError("initial_state.custom_weights: negative entry");
        sum += x;
      }
      if (std::abs(sum - 1.0) > 1e-9) {
        throw ValidationError("initial_state.custom_weights: must sum to 1");
      }
      // w[i] corresponds to M = -J + i.
      for (int i = 0; i <= n; ++i) {
        state.populations[index.index_of(n, -n + 2 * i)] = w[static_cast<std::size_t>(i)];
      }
      break;
    }
  }
  return state;
}

namespace {

// 2J * gamma_d * (1 - (M/J)^2) = gamma_d * (2J^2 - 2M^2)/J; exact in 2J, 2M.
double dephasing_rate(int two_j, int two_m, double gamma_d) {
  const long long num = static_cast<long long>(two_j) * two_j -
                        static_cast<long long>(two_m) * two_m;
  return gamma_d * static_cast<double>(num) / static_cast<double>(two_j);
}

}  // namespace

Eigen::SparseMatrix<double> build_rate_matrix(const LadderIndex& index,
                                              const RateParams& params, Spin sigma) {
  params.validate();
  const int dim = index.dimension();
  const int row_nc = dim;
  const int row_dark = dim + 1;
  const double gamma = params.gamma;
  const double gamma_d = params.dephasing(sigma);
  const double gamma_isc = params.isc(sigma);

  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(dim) * 5 + 2);

  for (int col = 0; col < dim; ++col) {
    const auto [two_j, two_m] = index.jm_at(col);
    double loss = 0.0;

    const double w_col = gamma * emission_weight(two_j, two_m);
    if (w_col > 0.0) {
      trip.emplace_back(index.index_of(two_j, two_m - 2), col, w_col);
      loss += w_col;
    }

    const double d = dephasing_rate(two_j, two_m, gamma_d);
    if (d > 0.0) {
      // |M| < J implies the target (J-1/2, M-1/2) exists; J = 1/2 never
      // dephases out since both of its states sit at |M| = J.
      trip.emplace_back(index.index_of(two_j - 1, two_m - 1), col, d);
      trip.emplace_back(row_nc, col, d);  // one ejected excited spin per event
      loss += d;
    }

    const double leak = gamma_isc * static_cast<double>(two_j + two_m) / 2.0;
    if (leak > 0.0) {
      if (two_j >= 2) {
        trip.emplace_back(index.index_of(two_j - 1, two_m - 1), col, leak);
      } else {
        trip.emplace_back(row_dark, col, leak);
      }
      loss += leak;
    }

    if (loss > 0.0) trip.emplace_back(col, col, -loss);
  }

  trip.emplace_back(row_nc, row_nc, -(gamma + gamma_isc));

  Eigen::SparseMatrix<double> a(dim + 2, dim + 2);
  a.setFromTriplets(trip.begin(), trip.end());
  a.makeCompressed();
  return a;
}

double dephasing_outflux(const LadderIndex& index, const LadderState& state,
                         const RateParams& params) {
  const double gamma_d = params.dephasing(state.sigma);
  double flux = 0.0;
  for (int i = 0; i < index.dimension(); ++i) {
    const auto [two_j, two_m] = index.jm_at(i);
    flux += dephasing_rate(two_j, two_m, gamma_d) * state.populations[static_cast<std::size_t>(i)];
  }
  return flux;
}

}  // namespace srsim
