// Command-line front end: simulate collective NV fluorescence decay, fit
// measured decay histograms, predict photon-correlation observables, compare
// decay models, and estimate dipole-dipole interaction scales.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>

#include "srsim/coherence.hpp"
#include "srsim/decay_io.hpp"
#include "srsim/ensemble.hpp"
#include "srsim/errors.hpp"
#include "srsim/fitting.hpp"
#include "srsim/ladder.hpp"
#include "srsim/physics.hpp"
#include "srsim/propagator.hpp"
#include "srsim/random.hpp"
#include "srsim/svg_plot.hpp"
#include "srsim/units.hpp"

namespace fs = std::filesystem;
using namespace srsim;

namespace {

void write_key_values(const std::string& path,
                      const std::vector<std::pair<std::string, std::string>>& kv) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  for (const auto& [k, v] : kv) out << k << " = " << v << "\n";
}

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

DomainEnsemble config_ensemble(const RunConfig& cfg) {
  if (cfg.domain_sets) return ensemble_from_sets(*cfg.domain_sets);
  return ensemble_for_max_size(cfg.n_max, cfg.polarization);
}

DecayTrace simulate_trace(const RunConfig& cfg) {
  const auto ens = config_ensemble(cfg);
  TraceCache cache;
  auto trace = total_fluorescence(ens, cfg.params, cfg.initial_state, cfg.grid, &cache);
  trace = convolve_irf(trace, cfg.irf);

  DecayTrace out;
  out.irf = cfg.irf;
  out.background = cfg.background;
  out.source_id = "simulated";
  const double h = cfg.grid.dt();
  out.bin_edges.reserve(trace.times.size() + 1);
  for (double t : trace.times) out.bin_edges.push_back(t);
  out.bin_edges.push_back(trace.times.back() + h);

  double peak = 0.0;
  for (double r : trace.rates) peak = std::max(peak, r);
  const double scale =
      cfg.noise_peak_counts > 0.0 && peak > 0.0 ? cfg.noise_peak_counts / peak : 1.0;
  out.counts.reserve(trace.rates.size());
  for (double r : trace.rates) out.counts.push_back(scale * r + cfg.background);
  if (cfg.noise_peak_counts > 0.0) out.counts = poisson_sample(out.counts, cfg.seed);
  return out;
}

int run_simulate(const RunConfig& cfg) {
  const auto trace = simulate_trace(cfg);
  const fs::path dir(cfg.out_dir);
  fs::create_directories(dir);
  emit_decay_csv(trace, (dir / "decay.csv").string());

  double lt = 0.0;
  std::string lt_note = "n/a";
  try {
    lt = initial_lifetime(trace);
    lt_note = num(units::ns_from_seconds(lt));
  } catch (const FitError&) {
  }

  PlotSeries s{.x = {}, .y = {}, .label = "decay", .color = "#1f77b4"};
  for (std::size_t i = 0; i < trace.counts.size(); ++i) {
    s.x.push_back(units::ns_from_seconds(0.5 * (trace.bin_edges[i] + trace.bin_edges[i + 1])));
    s.y.push_back(trace.counts[i]);
  }
  PlotSpec spec{.title = "Fluorescence decay",
                .x_label = "time [ns]",
                .y_label = "counts",
                .log_y = true};
  if (lt > 0.0) spec.x_markers.push_back(units::ns_from_seconds(lt));
  write_svg_plot((dir / "decay_plot.svg").string(), spec, {s});

  write_key_values((dir / "results.txt").string(),
                   {{"mode", "simulate"},
                    {"n_max", std::to_string(cfg.n_max)},
                    {"gamma_mhz", num(units::mhz_from_rate(cfg.params.gamma))},
                    {"lifetime_1e_ns", lt_note},
                    {"peak_counts", num(*std::max_element(trace.counts.begin(), trace.counts.end()))},
                    {"n_bins", std::to_string(trace.n_bins())}});
  std::cout << "simulate: wrote " << (dir / "decay.csv").string() << " (1/e lifetime "
            << lt_note << " ns)\n";
  return 0;
}

std::vector<std::pair<std::string, std::string>> fit_report(const FitResult& fit) {
  std::vector<std::pair<std::string, std::string>> kv{
      {"n_max", std::to_string(fit.n_max)},
      {"gamma_mhz", num(units::mhz_from_rate(fit.gamma))},
      {"gamma_d0_mhz", num(units::mhz_from_rate(fit.gamma_d_0))},
      {"gamma_d1_mhz", num(units::mhz_from_rate(fit.gamma_d_1))},
      {"p0", num(fit.p0)},
      {"residual", num(fit.residual)},
      {"lsq_residual", num(fit.lsq_residual)},
      {"amplitude", num(fit.amplitude)},
      {"background", num(fit.background)},
      {"converged", fit.converged ? "true" : "false"}};
  for (const auto& [k, v] : fit.model_params) kv.emplace_back("param_" + k, num(v));
  int i = 0;
  for (const auto& w : fit.warnings) kv.emplace_back("warning_" + std::to_string(i++), w);
  return kv;
}

int run_fit(const RunConfig& cfg) {
  auto trace = ingest_decay_csv(cfg.input);
  const auto fit = fit_superradiant(trace, cfg.fit);

  const fs::path dir(cfg.out_dir);
  fs::create_directories(dir);
  write_key_values((dir / "fit_result.txt").string(), fit_report(fit));

  RateParams p;
  p.gamma = fit.gamma;
  p.gamma_isc_0 = cfg.fit.gamma_isc_0;
  p.gamma_isc_1 = cfg.fit.gamma_isc_1;
  p.gamma_d_0 = fit.gamma_d_0;
  p.gamma_d_1 = fit.gamma_d_1;
  const auto model = superradiant_model_curve(trace, p, fit.n_max, fit.p0);

  PlotSeries data{.x = {}, .y = {}, .label = "data", .color = "#1f77b4"};
  PlotSeries overlay{.x = {}, .y = {}, .label = "fit", .color = "#d62728"};
  for (std::size_t i = 0; i < trace.counts.size(); ++i) {
    const double t = units::ns_from_seconds(trace.bin_edges[i]);
    data.x.push_back(t);
    data.y.push_back(std::max(0.0, trace.counts[i] - fit.background));
    overlay.x.push_back(t);
    overlay.y.push_back(fit.amplitude * model[i]);
  }
  write_svg_plot((dir / "fit_overlay.svg").string(),
                 {.title = "Decay fit", .x_label = "time [ns]", .y_label = "counts",
                  .log_y = true},
                 {data, overlay});
  std::cout << "fit: n_max=" << fit.n_max << " gamma/2pi="
            << num(units::mhz_from_rate(fit.gamma)) << " MHz, results in "
            << (dir / "fit_result.txt").string() << "\n";
  return 0;
}

int run_g2(const RunConfig& cfg) {
  const fs::path dir(cfg.out_dir);
  fs::create_directories(dir);

  // Zero-delay coherence vs mean domain size, Gaussian(nbar, nbar/2) weights.
  PlotSeries curve{.x = {}, .y = {}, .label = "g2(0) upper limit", .color = "#d62728"};
  for (int nbar = 1; nbar <= cfg.g2_nbar_max; ++nbar) {
    double g2 = 0.0;
    if (nbar == 1) {
      g2 = g2_zero_mixed(1);
    } else {
      GaussianDomainSpec spec{.mean = static_cast<double>(nbar),
                              .variance = nbar / 2.0,
                              .max_size = LadderIndex::kMaxSpins};
      const auto ens = ensemble_from_gaussian(spec, spec, 0.5);
      g2 = g2_zero_ensemble(ens);
    }
    curve.x.push_back(nbar);
    curve.y.push_back(g2);
  }
  write_svg_plot((dir / "g2_zero_vs_n.svg").string(),
                 {.title = "Zero-delay photon correlation vs domain size",
                  .x_label = "mean cooperative number N",
                  .y_label = "g2(0)"},
                 {curve});

  // Time-integrated autocorrelation for the configured largest domain.
  const LadderIndex index = build_index(cfg.n_max);
  const auto state = initial_state(index, cfg.initial_state, Spin::ms0);
  std::vector<double> taus;
  for (int i = 1; i <= cfg.g2_n_tau; ++i) {
    taus.push_back(cfg.g2_tau_max * i / cfg.g2_n_tau);
  }
  const auto g2bar = g2_time_integrated(index, state, cfg.params, taus);

  PlotSeries tcurve{.x = {}, .y = {}, .label = "g2bar(tau)", .color = "#1f77b4"};
  for (std::size_t i = 0; i < g2bar.delays.size(); ++i) {
    tcurve.x.push_back(units::ns_from_seconds(g2bar.delays[i]));
    tcurve.y.push_back(g2bar.values[i]);
  }
  write_svg_plot((dir / "g2_time_integrated.svg").string(),
                 {.title = "Time-integrated autocorrelation",
                  .x_label = "slice width tau [ns]",
                  .y_label = "g2bar"},
                 {tcurve});

  const double g2_zero = g2_zero_from_state(index, state);
  write_key_values((dir / "results.txt").string(),
                   {{"mode", "g2"},
                    {"n_max", std::to_string(cfg.n_max)},
                    {"g2_zero_state", num(g2_zero)},
                    {"g2_zero_allup", num(g2_zero_allup(cfg.n_max))},
                    {"g2_zero_mixed", num(g2_zero_mixed(cfg.n_max))},
                    {"g2bar_first", num(g2bar.values.front())},
                    {"g2bar_last", num(g2bar.values.back())}});
  std::cout << "g2: wrote curves to " << dir.string() << "\n";
  return 0;
}

int run_compare(const RunConfig& cfg) {
  auto trace = ingest_decay_csv(cfg.input);
  const auto cmp = compare_models(trace, cfg.fit);

  const fs::path dir(cfg.out_dir);
  fs::create_directories(dir);

  std::vector<std::pair<std::string, std::string>> kv{{"mode", "compare"}};
  std::ofstream csv((dir / "model_comparison.csv").string());
  if (!csv) throw IoError("cannot write model_comparison.csv");
  csv << "model,residual,lsq_residual,converged\n";
  for (const auto& [name, fit] : cmp.fits) {
    csv << name << "," << fit.residual << "," << fit.lsq_residual << ","
        << (fit.converged ? 1 : 0) << "\n";
    kv.emplace_back(name + "_lsq_residual", num(fit.lsq_residual));
  }
  for (const auto& [name, err] : cmp.errors) kv.emplace_back(name + "_error", err);
  kv.emplace_back("lsq_ratio_biexponential", num(cmp.lsq_ratio_biexponential));
  kv.emplace_back("lsq_ratio_deformed", num(cmp.lsq_ratio_deformed));
  kv.emplace_back("deformed_coupling", num(cmp.deformed_coupling));
  if (auto it = cmp.fits.find("superradiant"); it != cmp.fits.end()) {
    for (const auto& [k, v] : fit_report(it->second)) kv.emplace_back("sr_" + k, v);
  }
  write_key_values((dir / "model_comparison.txt").string(), kv);
  std::cout << "compare: biexponential/superradiant lsq ratio "
            << num(cmp.lsq_ratio_biexponential) << ", deformed ratio "
            << num(cmp.lsq_ratio_deformed) << "\n";
  return 0;
}

int run_dd(const RunConfig& cfg) {
  DipoleGeometry geom;
  geom.separation = cfg.dd_separation;
  geom.d1 = cfg.dd_d1.normalized();
  geom.d2 = cfg.dd_d2.normalized();
  geom.n_hat = cfg.dd_n_hat.normalized();
  geom.gamma = cfg.params.gamma;
  const double vdd = dipole_dipole_strength(geom);
  const double sep_ws = mean_separation(cfg.dd_density);
  const double sep_cbrt = mean_separation(cfg.dd_density, SeparationConvention::CubeRoot);
  const double ratio = isc_lifetime_ratio(cfg.params.gamma_isc_0 / cfg.params.gamma,
                                          cfg.params.gamma_isc_1 / cfg.params.gamma);

  const fs::path dir(cfg.out_dir);
  fs::create_directories(dir);
  write_key_values((dir / "dd_estimate.txt").string(),
                   {{"mode", "dd-estimate"},
                    {"v_dd_mhz", num(units::mhz_from_rate(vdd))},
                    {"separation_nm", num(units::nm_from_meters(cfg.dd_separation))},
                    {"mean_separation_wigner_seitz_nm", num(units::nm_from_meters(sep_ws))},
                    {"mean_separation_cuberoot_nm", num(units::nm_from_meters(sep_cbrt))},
                    {"isc_lifetime_ratio", num(ratio)}});
  std::cout << "dd-estimate: V_dd/2pi = " << num(units::mhz_from_rate(vdd)) << " MHz\n";
  return 0;
}

int run_scatter(const RunConfig& cfg) {
  const auto records = ingest_scatter_csv(cfg.input);
  const auto summary = scatter_analysis(records);

  const fs::path dir(cfg.out_dir);
  fs::create_directories(dir);

  const auto scatter_plot = [&](const std::string& name, const std::string& xlabel,
                                auto getter) {
    PlotSeries s{.x = {}, .y = {}, .label = "", .color = "#1f77b4", .points_only = true};
    for (const auto& r : records) {
      s.x.push_back(getter(r));
      s.y.push_back(r.decay_rate_per_ns);
    }
    write_svg_plot((dir / name).string(),
                   {.title = "Decay rate vs " + xlabel, .x_label = xlabel,
                    .y_label = "decay rate [1/ns]"},
                   {s});
  };
  scatter_plot("rate_vs_size.svg", "diameter [nm]",
               [](const ScatterRecord& r) { return r.diameter_nm; });
  scatter_plot("rate_vs_brightness.svg", "peak brightness",
               [](const ScatterRecord& r) { return r.peak_brightness; });
  scatter_plot("rate_vs_density.svg", "NV density",
               [](const ScatterRecord& r) { return r.nv_density; });

  write_key_values((dir / "scatter_summary.txt").string(),
                   {{"mode", "scatter"},
                    {"n_records", std::to_string(summary.n_records)},
                    {"forbidden_count", std::to_string(summary.forbidden_count)},
                    {"forbidden_fraction", num(summary.forbidden_fraction)},
                    {"mean_rate_per_ns", num(summary.mean_rate_per_ns)},
                    {"rate_size_correlation", num(summary.rate_size_correlation)},
                    {"rate_brightness_correlation", num(summary.rate_brightness_correlation)},
                    {"rate_density_correlation", num(summary.rate_density_correlation)}});
  std::cout << "scatter: " << summary.n_records << " records, forbidden fraction "
            << num(summary.forbidden_fraction) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Collective NV-centre fluorescence simulator and decay fitter"};

  std::string mode_flag, config_path, input_flag, out_dir_flag;
  std::optional<std::uint64_t> seed_flag;
  std::optional<int> n_max_flag;
  std::optional<double> gamma_mhz_flag, irf_ps_flag;

  app.add_option("--mode", mode_flag, "simulate|fit|g2|compare|dd-estimate|scatter");
  app.add_option("--config", config_path, "JSON run configuration");
  app.add_option("--input", input_flag, "input CSV (fit/compare/scatter)");
  app.add_option("--out-dir", out_dir_flag, "output directory");
  app.add_option("--seed", seed_flag, "random seed override");
  app.add_option("--n-max", n_max_flag, "largest collective domain size");
  app.add_option("--gamma-mhz", gamma_mhz_flag, "radiative rate gamma/2pi in MHz");
  app.add_option("--irf-ps", irf_ps_flag, "Gaussian IRF FWHM in ps");

  CLI11_PARSE(app, argc, argv);

  try {
    RunConfig cfg;
    if (!config_path.empty()) {
      cfg = load_run_config(config_path);
    } else {
      cfg.params = bulk_nv_rates();
      cfg.fit.gamma_isc_0 = cfg.params.gamma_isc_0;
      cfg.fit.gamma_isc_1 = cfg.params.gamma_isc_1;
    }

    if (!mode_flag.empty()) {
      if (mode_flag == "simulate") cfg.mode = RunConfig::Mode::Simulate;
      else if (mode_flag == "fit") cfg.mode = RunConfig::Mode::Fit;
      else if (mode_flag == "g2") cfg.mode = RunConfig::Mode::G2;
      else if (mode_flag == "compare") cfg.mode = RunConfig::Mode::Compare;
      else if (mode_flag == "dd-estimate") cfg.mode = RunConfig::Mode::DdEstimate;
      else if (mode_flag == "scatter") cfg.mode = RunConfig::Mode::Scatter;
      else throw ValidationError("--mode: unknown mode '" + mode_flag + "'");
    }
    if (!input_flag.empty()) cfg.input = input_flag;
    if (!out_dir_flag.empty()) cfg.out_dir = out_dir_flag;
    if (seed_flag) {
      cfg.seed = *seed_flag;
      cfg.fit.seed = *seed_flag;
    }
    if (n_max_flag) cfg.n_max = *n_max_flag;
    if (gamma_mhz_flag) cfg.params.gamma = units::rate_from_mhz(*gamma_mhz_flag);
    if (irf_ps_flag) {
      cfg.irf = IrfSpec{.shape = IrfSpec::Shape::Gaussian,
                        .fwhm = units::seconds_from_ps(*irf_ps_flag)};
    }
    cfg.validate();

    // Fail on an unwritable output directory before any computation starts.
    {
      std::error_code ec;
      fs::create_directories(cfg.out_dir, ec);
      const fs::path probe = fs::path(cfg.out_dir) / ".write_probe";
      std::ofstream touch(probe);
      if (ec || !touch) {
        throw IoError("output directory not writable: " + cfg.out_dir);
      }
      touch.close();
      fs::remove(probe, ec);
    }

    switch (cfg.mode) {
      case RunConfig::Mode::Simulate: return run_simulate(cfg);
      case RunConfig::Mode::Fit: return run_fit(cfg);
      case RunConfig::Mode::G2: return run_g2(cfg);
      case RunConfig::Mode::Compare: return run_compare(cfg);
      case RunConfig::Mode::DdEstimate: return run_dd(cfg);
      case RunConfig::Mode::Scatter: return run_scatter(cfg);
    }
    return 0;
  } catch (const ValidationError& err) {
    std::cerr << "validation error: " << err.what() << "\n";
    return 2;
  } catch (const DomainError& err) {
    std::cerr << "validation error: " << err.what() << "\n";
    return 2;
  } catch (const FitError& err) {
    std::cerr << "fit error: " << err.what() << "\n";
    return 3;
  } catch (const IoError& err) {
    std::cerr << "i/o error: " << err.what() << "\n";
    return 4;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 1;
  }
}
