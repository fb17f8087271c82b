#include "srsim/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "srsim/errors.hpp"

namespace srsim {

void GaussianDomainSpec::validate(const char* field) const {
  const std::string f(field);
  if (!(mean > 0.0)) throw ValidationError(f + ".mean: must be > 0");
  if (!(variance >= 0.0)) throw ValidationError(f + ".variance: must be >= 0");
  if (max_size < 1 || max_size > LadderIndex::kMaxSpins) {
    throw ValidationError(f + ".max_size: must be in [1, " +
                          std::to_string(LadderIndex::kMaxSpins) + "]");
  }
  if (mean > static_cast<double>(max_size)) {
    throw ValidationError(f + ".mean: must be <= max_size");
  }
}

double DomainEnsemble::p0() const {
  double w = 0.0;
  for (const auto& [n, p] : weights0) w += p;
  return w;
}

double DomainEnsemble::total_weight() const {
  double w = 0.0;
  for (const auto& [n, p] : weights0) w += p;
  for (const auto& [n, p] : weights1) w += p;
  return w;
}

int DomainEnsemble::max_domain() const {
  int m = 0;
  if (!weights0.empty()) m = std::max(m, weights0.rbegin()->first);
  if (!weights1.empty()) m = std::max(m, weights1.rbegin()->first);
  return m;
}

void DomainEnsemble::validate() const {
  if (weights0.empty() && weights1.empty()) {
    throw ValidationError("ensemble: no domains");
  }
  for (const auto* w : {&weights0, &weights1}) {
    for (const auto& [n, p] : *w) {
      if (n < 1 || n > LadderIndex::kMaxSpins) {
        throw ValidationError("ensemble: domain size out of range");
      }
      if (!(p >= 0.0)) throw ValidationError("ensemble: negative weight");
    }
  }
  if (std::abs(total_weight() - 1.0) > 1e-12) {
    throw ValidationError("ensemble: weights must sum to 1");
  }
}

DomainEnsemble ensemble_from_sets(const DomainSets& sets) {
  if (sets.s0.empty() && sets.s1.empty()) {
    throw ValidationError("domain_sets: both sets empty");
  }
  for (const auto* s : {&sets.s0, &sets.s1}) {
    for (int n : *s) {
      if (n < 1) throw ValidationError("domain_sets: sizes must be >= 1");
    }
  }
  double total = 0.0;
  for (int n : sets.s0) total += n;
  for (int n : sets.s1) total += n;

  DomainEnsemble e;
  for (int n : sets.s0) e.weights0[n] += n / total;
  for (int n : sets.s1) e.weights1[n] += n / total;
  return e;
}

namespace {

std::map<int, double> gaussian_weights(const GaussianDomainSpec& spec, double mass) {
  std::map<int, double> w;
  if (spec.variance < 1e-12) {
    const int n = std::clamp(static_cast<int>(std::llround(spec.mean)), 1, spec.max_size);
    w[n] = mass;
    return w;
  }
  double sum = 0.0;
  for (int n = 1; n <= spec.max_size; ++n) {
    const double d = n - spec.mean;
    const double v = std::exp(-d * d / (2.0 * spec.variance));
    w[n] = v;
    sum += v;
  }
  for (auto& [n, v] : w) v *= mass / sum;
  // Drop negligible sizes so the propagation loop skips them; fold the
  // removed mass back to keep the total exact.
  double dropped = 0.0;
  for (auto it = w.begin(); it != w.end();) {
    if (it->second < 1e-12 * mass) {
      dropped += it->second;
      it = w.erase(it);
    } else {
      ++it;
    }
  }
  if (!w.empty() && dropped > 0.0) {
    const double rescale = mass / (mass - dropped);
    for (auto& [n, v] : w) v *= rescale;
  }
  return w;
}

}  // namespace

DomainEnsemble ensemble_from_gaussian(const GaussianDomainSpec& spec0,
                                      const GaussianDomainSpec& spec1, double pol_target) {
  spec0.validate("ensemble.spec0");
  spec1.validate("ensemble.spec1");
  if (!(pol_target > 0.0 && pol_target < 1.0)) {
    throw ValidationError("ensemble.polarization: must be in (0, 1)");
  }
  DomainEnsemble e;
  e.weights0 = gaussian_weights(spec0, pol_target);
  e.weights1 = gaussian_weights(spec1, 1.0 - pol_target);
  e.validate();
  return e;
}

DomainEnsemble ensemble_for_max_size(int n_max, double polarization) {
  if (n_max < 1 || n_max > LadderIndex::kMaxSpins) {
    throw ValidationError("ensemble.n_max: out of range");
  }
  if (!(polarization > 0.0 && polarization < 1.0)) {
    throw ValidationError("ensemble.polarization: must be in (0, 1)");
  }
  const int n1 = (n_max + 1) / 2;
  DomainEnsemble e;
  const auto side = [](int n) {
    std::map<int, double> w;
    if (n == 1) {
      w[1] = 1.0;
      return w;
    }
    GaussianDomainSpec spec{.mean = static_cast<double>(n),
                            .variance = n / 2.0,
                            .max_size = n};
    auto full = ensemble_from_gaussian(spec, spec, 0.5).weights0;
    double sum = 0.0;
    for (const auto& [size, v] : full) sum += v;
    for (auto& [size, v] : full) v /= sum;
    return full;
  };
  for (const auto& [size, v] : side(n_max)) e.weights0[size] = v * polarization;
  for (const auto& [size, v] : side(n1)) e.weights1[size] = v * (1.0 - polarization);
  e.validate();
  return e;
}

TraceCache::Series TraceCache::find(const std::string& key) const {
  std::lock_guard<std::mutex> lock(mutex_);
  auto it = map_.find(key);
  return it == map_.end() ? nullptr : it->second;
}

void TraceCache::insert(const std::string& key, Series series) {
  std::lock_guard<std::mutex> lock(mutex_);
  map_.emplace(key, std::move(series));
}

std::size_t TraceCache::size() const {
  std::lock_guard<std::mutex> lock(mutex_);
  return map_.size();
}

std::string TraceCache::key_for(Spin sigma, int domain, const RateParams& params,
                                const InitialStateSpec& spec, double dt, int n_steps) {
  // Rates quantized to milli-rad/s and times to femtoseconds: far below any
  // physically meaningful difference, immune to printing round-trips.
  const auto q = [](double x) { return std::llround(x * 1e3); };
  std::ostringstream os;
  os << (sigma == Spin::ms0 ? '0' : '1') << ':' << domain << ':' << q(params.gamma) << ':'
     << q(params.isc(sigma)) << ':' << q(params.dephasing(sigma)) << ':'
     << std::llround(dt * 1e15) << ':' << n_steps << ':' << static_cast<int>(spec.kind);
  return os.str();
}

namespace {

// Initial state of a domain of n_domain spins expressed in the index of the
// enclosing max_spins ladder: the top ladder of the domain is the J =
// n_domain/2 block.
Eigen::VectorXd domain_initial_vector(const LadderIndex& index, int n_domain,
                                      const InitialStateSpec& spec) {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(index.dimension() + 2);
  switch (spec.kind) {
    case InitialStateSpec::Kind::AllUp:
      v[index.index_of(n_domain, n_domain)] = 1.0;
      break;
    case InitialStateSpec::Kind::MaximallyMixedTopLadder:
      for (int two_m = n_domain; two_m >= -n_domain; two_m -= 2) {
        v[index.index_of(n_domain, two_m)] = 1.0 / (n_domain + 1);
      }
      break;
    case InitialStateSpec::Kind::Custom:
      throw ValidationError(
          "ensemble.initial_state: custom weights require a single domain size");
  }
  return v;
}

}  // namespace

FluorescenceTrace total_fluorescence(const DomainEnsemble& ensemble,
                                     const RateParams& params,
                                     const InitialStateSpec& init, const TimeGrid& grid,
                                     TraceCache* cache) {
  ensemble.validate();
  params.validate();
  grid.validate();
  if (ensemble.max_domain() > LadderIndex::kMaxSpins) {
    throw ValidationError("ensemble: domain size beyond implementation cap");
  }

  const auto times = grid.times();
  const auto n = static_cast<std::size_t>(grid.n_points);
  std::vector<double> total(n, 0.0);

  const bool fast = grid.uniform() && grid.t_start == 0.0;
  const double dt = fast ? grid.dt() : 0.0;

  // Custom initial states are only meaningful for a single domain size.
  if (init.kind == InitialStateSpec::Kind::Custom) {
    const bool single = (ensemble.weights0.size() + ensemble.weights1.size()) == 1;
    if (!single) {
      throw ValidationError(
          "ensemble.initial_state: custom weights require a single domain size");
    }
  }

  for (Spin sigma : {Spin::ms0, Spin::ms1}) {
    const auto& weights = sigma == Spin::ms0 ? ensemble.weights0 : ensemble.weights1;
    if (weights.empty()) continue;

    // Resolve cached domain traces first.
    std::vector<std::pair<int, double>> missing;
    for (const auto& [n_dom, p] : weights) {
      if (cache != nullptr && fast) {
        const auto key = TraceCache::key_for(sigma, n_dom, params, init, dt,
                                             grid.n_points - 1);
        if (auto hit = cache->find(key)) {
          for (std::size_t k = 0; k < n; ++k) total[k] += p * (*hit)[k];
          continue;
        }
      }
      missing.emplace_back(n_dom, p);
    }
    if (missing.empty()) continue;

    const int n_top = missing.back().first;
    const LadderIndex index = build_index(n_top);
    const auto gen = build_rate_matrix(index, params, sigma);

    try {
      if (fast) {
        std::vector<Eigen::VectorXd> states;
        states.reserve(missing.size());
        for (const auto& [n_dom, p] : missing) {
          if (init.kind == InitialStateSpec::Kind::Custom) {
            states.push_back(state_vector(initial_state(index, init, sigma)));
          } else {
            states.push_back(domain_initial_vector(index, n_dom, init));
          }
        }
        const Eigen::VectorXd f = emission_functional(index, params);
        const Eigen::MatrixXd series =
            functional_series(gen, dt, grid.n_points - 1, f, states);
        for (std::size_t i = 0; i < missing.size(); ++i) {
          const auto [n_dom, p] = missing[i];
          auto col = std::make_shared<std::vector<double>>(n);
          for (std::size_t k = 0; k < n; ++k) {
            (*col)[k] = series(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i));
          }
          if (cache != nullptr) {
            cache->insert(TraceCache::key_for(sigma, n_dom, params, init, dt,
                                              grid.n_points - 1),
                          col);
          }
          for (std::size_t k = 0; k < n; ++k) total[k] += p * (*col)[k];
        }
      } else {
        for (const auto& [n_dom, p] : missing) {
          const LadderIndex sub = build_index(n_dom);
          const auto sub_gen = build_rate_matrix(sub, params, sigma);
          LadderState s0 = initial_state(sub, init, sigma);
          const auto traj = evolve(sub_gen, s0, grid);
          for (std::size_t k = 0; k < n; ++k) {
            total[k] += p * fluorescence(sub, traj[k], params);
          }
        }
      }
    } catch (const NumericalError& err) {
      std::ostringstream os;
      os << err.what() << " (sigma=" << (sigma == Spin::ms0 ? "0" : "+-1")
         << ", max domain=" << n_top << ")";
      throw NumericalError(os.str());
    }
  }

  FluorescenceTrace trace;
  trace.times = times;
  trace.rates = std::move(total);
  {
    std::ostringstream os;
    os << "ensemble p0=" << ensemble.p0() << " max_n=" << ensemble.max_domain()
       << " gamma_mhz=" << params.gamma / (2.0e6 * std::numbers::pi)
       << " gd_mhz=" << params.gamma_d_0 / (2.0e6 * std::numbers::pi) << "/"
       << params.gamma_d_1 / (2.0e6 * std::numbers::pi);
    trace.provenance = os.str();
  }
  return trace;
}

}  // namespace srsim
