#pragma once

#include <optional>
#include <string>
#include <vector>

#include "srsim/ensemble.hpp"
#include "srsim/fitting.hpp"
#include "srsim/ladder.hpp"
#include "srsim/propagator.hpp"

namespace srsim {

/// Reads `time_ns,counts` CSV. `# irf_fwhm_ps=` and `# background=` header
/// comments attach an IRF and a background level. Time column holds bin left
/// edges; the final edge is extrapolated from the last spacing.
DecayTrace ingest_decay_csv(const std::string& path);

/// Writes a trace in the format read by ingest_decay_csv, with enough digits
/// that a round trip reproduces edges and counts bit for bit.
void emit_decay_csv(const DecayTrace& trace, const std::string& path);

/// One characterized nanocrystal in an ensemble survey.
struct ScatterRecord {
  std::string diamond_id;
  double diameter_nm = 0.0;
  double decay_rate_per_ns = 0.0;
  double peak_brightness = 0.0;  // volume-normalized, arbitrary units
  double nv_density = 0.0;       // arbitrary units
};

std::vector<ScatterRecord> ingest_scatter_csv(const std::string& path);

struct ScatterSummary {
  int n_records = 0;
  /// Fraction of records that are both small and fast, which collective
  /// decay forbids: diameter below the size cutoff with a decay rate above
  /// the rate cutoff.
  double forbidden_fraction = 0.0;
  int forbidden_count = 0;
  double size_cutoff_nm = 0.0;
  double rate_cutoff_per_ns = 0.0;
  double mean_rate_per_ns = 0.0;
  double rate_size_correlation = 0.0;
  double rate_brightness_correlation = 0.0;
  double rate_density_correlation = 0.0;
};

ScatterSummary scatter_analysis(const std::vector<ScatterRecord>& records,
                                double size_cutoff_nm = 70.0,
                                double rate_cutoff_per_ns = 0.5);

/// Parsed CLI/config surface for one run.
struct RunConfig {
  enum class Mode { Simulate, Fit, G2, Compare, DdEstimate, Scatter };

  Mode mode = Mode::Simulate;
  std::uint64_t seed = 1;
  std::string out_dir = ".";
  std::string input;  // decay or scatter CSV for fit/compare/scatter modes

  RateParams params;  // dephasing rates included
  int n_max = 1;
  double polarization = 0.5;
  std::optional<DomainSets> domain_sets;  // overrides the Gaussian ensemble

  InitialStateSpec initial_state;
  TimeGrid grid{.t_start = 0.0, .t_end = 100e-9, .n_points = 2048};
  IrfSpec irf;
  double noise_peak_counts = 0.0;  // 0 disables Poisson noise
  double background = 0.0;         // counts per bin added to simulations

  FitConfig fit;

  // g2 mode: ensemble sweep plus time-integrated window.
  int g2_nbar_max = 50;
  double g2_tau_max = 6e-9;
  int g2_n_tau = 24;

  // dd-estimate mode.
  double dd_separation = 10e-9;
  double dd_density = 1e24;
  Eigen::Vector3d dd_d1 = Eigen::Vector3d::UnitX();
  Eigen::Vector3d dd_d2 = Eigen::Vector3d::UnitX();
  Eigen::Vector3d dd_n_hat = Eigen::Vector3d::UnitZ();

  void validate() const;
};

/// Loads and validates a JSON run configuration. Unknown keys are rejected;
/// error messages carry the offending field path.
RunConfig load_run_config(const std::string& path);

std::string mode_name(RunConfig::Mode mode);

}  // namespace srsim
