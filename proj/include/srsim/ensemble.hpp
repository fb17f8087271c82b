#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <unordered_map>
#include <vector>

#include "srsim/ladder.hpp"
#include "srsim/propagator.hpp"

namespace srsim {

/// Collective domain sizes present in a crystal, one multiset per spin
/// projection.
struct DomainSets {
  std::vector<int> s0;
  std::vector<int> s1;
};

/// Discretized domain-size distribution: mean/variance of a Gaussian over
/// integer sizes, truncated to [1, max_size].
struct GaussianDomainSpec {
  double mean = 1.0;
  double variance = 0.0;
  int max_size = 1;

  void validate(const char* field) const;
};

/// Probability that an emitting spin belongs to a domain of a given size and
/// projection. Weights sum to 1 across both projections; p0 is the m_s = 0
/// fraction.
struct DomainEnsemble {
  std::map<int, double> weights0;
  std::map<int, double> weights1;

  double p0() const;
  double total_weight() const;
  int max_domain() const;
  void validate() const;
};

/// Spin-count weighted probabilities from explicit domain sets:
/// p_N = sum_{n in S, n = N} n / (N0_tot + N1_tot).
DomainEnsemble ensemble_from_sets(const DomainSets& sets);

/// Truncated Gaussian weights per projection, scaled so the derived
/// polarization equals pol_target.
DomainEnsemble ensemble_from_gaussian(const GaussianDomainSpec& spec0,
                                      const GaussianDomainSpec& spec1, double pol_target);

/// The fixed domain-size convention used for simulation and fitting when
/// only the maximum m_s = 0 domain size is specified: each projection gets a
/// Gaussian with mean at its own maximum, variance of half the maximum,
/// truncated to [1, max]. The m_s = +-1 maximum is half the m_s = 0 one
/// (rounded up): that population dephases an order of magnitude faster, so
/// its coherent domains are smaller.
DomainEnsemble ensemble_for_max_size(int n_max, double polarization);

/// Memoizes per-(sigma, domain size, rates, grid) fluorescence traces.
/// Fitting re-evaluates heavily overlapping ensembles; safe for concurrent
/// insert/lookup.
class TraceCache {
 public:
  using Series = std::shared_ptr<const std::vector<double>>;

  Series find(const std::string& key) const;
  void insert(const std::string& key, Series series);
  std::size_t size() const;

  static std::string key_for(Spin sigma, int domain, const RateParams& params,
                             const InitialStateSpec& spec, double dt, int n_steps);

 private:
  mutable std::mutex mutex_;
  std::unordered_map<std::string, Series> map_;
};

/// F(t) = sum over projections and domain sizes of p_N * F_N(t), with the
/// m_s = 0 and +-1 populations propagated under their own ISC and dephasing
/// rates and added. All domains of one projection share a single step
/// operator, so the cost is two dense exponentials per call regardless of
/// how many domain sizes the ensemble carries.
FluorescenceTrace total_fluorescence(const DomainEnsemble& ensemble,
                                     const RateParams& params,
                                     const InitialStateSpec& init, const TimeGrid& grid,
                                     TraceCache* cache = nullptr);

}  // namespace srsim
