#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "srsim/ensemble.hpp"
#include "srsim/errors.hpp"
#include "srsim/ladder.hpp"
#include "srsim/propagator.hpp"

namespace srsim {

/// Time-binned photon-count histogram.
struct DecayTrace {
  std::vector<double> bin_edges;  // seconds, counts.size() + 1 entries
  std::vector<double> counts;
  IrfSpec irf;
  double background = 0.0;  // counts per bin
  std::string source_id;

  int n_bins() const { return static_cast<int>(counts.size()); }
  double bin_width() const { return bin_edges[1] - bin_edges[0]; }
  bool uniform(double rel_tol = 1e-6) const;
  void validate() const;
};

enum class FitLoss { LeastSquares, PoissonNll };

struct FitConfig {
  std::pair<int, int> n_range{1, 40};
  std::pair<double, double> dephasing_bounds_0;  // rad/s
  std::pair<double, double> dephasing_bounds_1;  // rad/s
  std::pair<double, double> polarization_bounds{0.05, 0.95};
  /// Tail-fit window in seconds; {0, 0} selects the last 40% of the trace.
  std::pair<double, double> tail_window{0.0, 0.0};
  FitLoss loss = FitLoss::PoissonNll;

  /// ISC rates are pinned, not fitted (bulk values by default).
  double gamma_isc_0;
  double gamma_isc_1;

  std::optional<double> fixed_gamma;      // skip the tail fit
  std::optional<double> fixed_gamma_d_0;  // pin a continuous parameter
  std::optional<double> fixed_gamma_d_1;
  std::optional<double> fixed_p0;
  std::optional<int> fixed_n_max;

  std::uint64_t seed = 0;
  int max_evaluations = 240;  // per n_max grid point
  int threads = 1;            // parallelism across the n_max grid

  FitConfig();
  void validate() const;
};

struct FitResult {
  int n_max = 1;
  double gamma = 0.0;
  double gamma_d_0 = 0.0;
  double gamma_d_1 = 0.0;
  double p0 = 0.0;
  double amplitude = 0.0;
  double background = 0.0;

  double residual = 0.0;      // configured loss at the optimum
  double lsq_residual = 0.0;  // least-squares residual at the optimum
  bool converged = false;

  std::map<std::string, double> model_params;      // extra per-model parameters
  std::map<std::string, double> per_model_scores;  // filled by compare_models
  std::optional<Eigen::MatrixXd> covariance_estimate;
  std::vector<std::string> warnings;
};

/// Fit non-convergence, carrying the best parameters reached.
struct FitNonConvergence : FitError {
  FitNonConvergence(const std::string& msg, FitResult best)
      : FitError(msg), best_so_far(std::move(best)) {}
  FitResult best_so_far;
};

/// Radiative rate from the long-time tail: fits a single exponential to the
/// window (weighted log-linear regression) and subtracts the pinned ISC rate
/// of the slow (m_s = 0) channel that dominates the tail.
double tail_fit_gamma(const DecayTrace& trace, std::pair<double, double> window,
                      double isc_rate);

/// 1/e lifetime from a single-exponential fit over [t_peak, t_peak + window].
double lifetime_1e(const DecayTrace& trace, double window = 1e-9);

/// Reporting protocol for the initial lifetime: the first-nanosecond fit,
/// widened to the measured 1/e time (iterated to self-consistency) when the
/// decay is slower than slow_threshold and one nanosecond resolves only a
/// few percent of the curve.
double initial_lifetime(const DecayTrace& trace, double slow_threshold = 6e-9);

/// Full inverse problem: gamma pinned from the tail, then {n_max, gamma_d_0,
/// gamma_d_1, p0} by discrete search over n_max with bounded Nelder-Mead
/// refinement of the continuous parameters at each grid point.
FitResult fit_superradiant(const DecayTrace& trace, const FitConfig& config);

/// a1 exp(-t/tau1) + a2 exp(-t/tau2), IRF-convolved, nonlinear least squares
/// with analytically profiled amplitudes.
FitResult fit_biexponential(const DecayTrace& trace);

/// I0 exp(-t/tau - a sqrt(t/tau)) with fixed deformation strength a
/// (Forster-type dipole-dipole quenching kinetics), least squares over tau.
FitResult fit_deformed_exponential(const DecayTrace& trace, double coupling);

struct ModelComparison {
  std::map<std::string, FitResult> fits;      // superradiant, biexponential, deformed
  std::map<std::string, std::string> errors;  // per-model failure messages
  double lsq_ratio_biexponential = 0.0;       // residual ratio vs superradiant
  double lsq_ratio_deformed = 0.0;
  double deformed_coupling = 0.0;  // coupling strength at the deformed optimum
};

/// Runs all three models on identical loss/window/IRF settings. Sub-fit
/// failures are recorded per model rather than raised.
ModelComparison compare_models(const DecayTrace& trace, const FitConfig& config);

/// Model counts for given superradiant parameters sampled at the trace bins
/// (IRF-convolved, unit peak before amplitude scaling). Exposed for forward
/// simulation and the CLI overlay output.
std::vector<double> superradiant_model_curve(const DecayTrace& trace,
                                             const RateParams& params, int n_max,
                                             double p0, TraceCache* cache = nullptr);

}  // namespace srsim
