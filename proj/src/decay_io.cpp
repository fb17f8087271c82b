#include "srsim/decay_io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>

#include "srsim/errors.hpp"
#include "srsim/units.hpp"

namespace srsim {

namespace {

double parse_double(const std::string& s, const std::string& where) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
    if (pos != s.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ValidationError(where + ": not a number: '" + s + "'");
  }
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream is(line);
  while (std::getline(is, field, ',')) out.push_back(field);
  return out;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// The file speaks ns while the trace stores seconds. Multiplying by 1e9 and
// back by 1e-9 double-rounds, so pick the ns value whose parse-and-scale
// reproduces the stored edge bit for bit (it exists for every edge that came
// through ingest, and almost always otherwise).
double ns_for_exact_round_trip(double seconds) {
  double ns = seconds * 1e9;
  if (ns * 1e-9 == seconds) return ns;
  double lo = ns, hi = ns;
  for (int k = 0; k < 4; ++k) {
    lo = std::nextafter(lo, -std::numeric_limits<double>::infinity());
    hi = std::nextafter(hi, std::numeric_limits<double>::infinity());
    if (lo * 1e-9 == seconds) return lo;
    if (hi * 1e-9 == seconds) return hi;
  }
  return ns;
}

}  // namespace

DecayTrace ingest_decay_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);

  DecayTrace trace;
  trace.source_id = path;
  double irf_fwhm_ps = 0.0;
  std::vector<double> kernel;

  std::string line;
  int line_no = 0;
  bool header_seen = false;
  std::vector<double> times_ns;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::string where = path + ":" + std::to_string(line_no);
    if (line[0] == '#') {
      const auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      std::string key = line.substr(1, eq - 1);
      key.erase(0, key.find_first_not_of(" \t"));
      key.erase(key.find_last_not_of(" \t") + 1);
      const std::string value = line.substr(eq + 1);
      if (key == "irf_fwhm_ps") {
        irf_fwhm_ps = parse_double(value, where + " irf_fwhm_ps");
      } else if (key == "background") {
        trace.background = parse_double(value, where + " background");
      }
      continue;
    }
    if (!header_seen) {
      if (line != "time_ns,counts") {
        throw ValidationError(where + ": expected header 'time_ns,counts'");
      }
      header_seen = true;
      continue;
    }
    const auto fields = split_csv_line(line);
    if (fields.size() != 2) {
      throw ValidationError(where + ": expected 2 columns, got " +
                            std::to_string(fields.size()));
    }
    const double t = parse_double(fields[0], where + " time_ns");
    const double c = parse_double(fields[1], where + " counts");
    if (!times_ns.empty() && t <= times_ns.back()) {
      throw ValidationError(where + ": time column must be strictly increasing");
    }
    if (c < 0.0) throw ValidationError(where + ": negative counts");
    times_ns.push_back(t);
    trace.counts.push_back(c);
  }
  if (trace.counts.size() < 2) {
    throw ValidationError(path + ": needs at least 2 data rows");
  }

  trace.bin_edges.reserve(times_ns.size() + 1);
  for (double t : times_ns) trace.bin_edges.push_back(t * 1e-9);
  const auto n = trace.bin_edges.size();
  trace.bin_edges.push_back(2.0 * trace.bin_edges[n - 1] - trace.bin_edges[n - 2]);

  if (irf_fwhm_ps > 0.0) {
    trace.irf = IrfSpec{.shape = IrfSpec::Shape::Gaussian,
                        .fwhm = units::seconds_from_ps(irf_fwhm_ps)};
  }
  trace.validate();
  return trace;
}

void emit_decay_csv(const DecayTrace& trace, const std::string& path) {
  trace.validate();
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  if (trace.irf.shape == IrfSpec::Shape::Gaussian && trace.irf.fwhm > 0.0) {
    out << "# irf_fwhm_ps=" << format_double(units::ps_from_seconds(trace.irf.fwhm)) << "\n";
  }
  if (trace.background > 0.0) {
    out << "# background=" << format_double(trace.background) << "\n";
  }
  out << "time_ns,counts\n";
  for (std::size_t i = 0; i < trace.counts.size(); ++i) {
    out << format_double(ns_for_exact_round_trip(trace.bin_edges[i])) << ","
        << format_double(trace.counts[i]) << "\n";
  }
  if (!out) throw IoError("write failed: " + path);
}

std::vector<ScatterRecord> ingest_scatter_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::vector<ScatterRecord> records;
  std::string line;
  int line_no = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const std::string where = path + ":" + std::to_string(line_no);
    if (!header_seen) {
      if (line != "diamond_id,diameter_nm,decay_rate_per_ns,peak_brightness,nv_density") {
        throw ValidationError(where + ": unexpected scatter header");
      }
      header_seen = true;
      continue;
    }
    const auto f = split_csv_line(line);
    if (f.size() != 5) throw ValidationError(where + ": expected 5 columns");
    ScatterRecord r;
    r.diamond_id = f[0];
    r.diameter_nm = parse_double(f[1], where + " diameter_nm");
    r.decay_rate_per_ns = parse_double(f[2], where + " decay_rate_per_ns");
    r.peak_brightness = parse_double(f[3], where + " peak_brightness");
    r.nv_density = parse_double(f[4], where + " nv_density");
    if (!(r.diameter_nm > 0.0)) throw ValidationError(where + ": diameter must be > 0");
    if (!(r.decay_rate_per_ns > 0.0)) throw ValidationError(where + ": rate must be > 0");
    records.push_back(r);
  }
  return records;
}

namespace {

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const auto n = static_cast<double>(x.size());
  double sx = 0, sy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
  }
  const double mx = sx / n, my = sy / n;
  double cxy = 0, cxx = 0, cyy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    cxy += (x[i] - mx) * (y[i] - my);
    cxx += (x[i] - mx) * (x[i] - mx);
    cyy += (y[i] - my) * (y[i] - my);
  }
  if (cxx <= 0.0 || cyy <= 0.0) return 0.0;
  return cxy / std::sqrt(cxx * cyy);
}

}  // namespace

ScatterSummary scatter_analysis(const std::vector<ScatterRecord>& records,
                                double size_cutoff_nm, double rate_cutoff_per_ns) {
  if (records.size() < 2) {
    throw ValidationError("scatter: need at least 2 records");
  }
  ScatterSummary s;
  s.n_records = static_cast<int>(records.size());
  s.size_cutoff_nm = size_cutoff_nm;
  s.rate_cutoff_per_ns = rate_cutoff_per_ns;

  std::vector<double> size, rate, brightness, density;
  for (const auto& r : records) {
    size.push_back(r.diameter_nm);
    rate.push_back(r.decay_rate_per_ns);
    brightness.push_back(r.peak_brightness);
    density.push_back(r.nv_density);
    if (r.diameter_nm < size_cutoff_nm && r.decay_rate_per_ns > rate_cutoff_per_ns) {
      ++s.forbidden_count;
    }
    s.mean_rate_per_ns += r.decay_rate_per_ns;
  }
  s.mean_rate_per_ns /= s.n_records;
  s.forbidden_fraction = static_cast<double>(s.forbidden_count) / s.n_records;
  s.rate_size_correlation = pearson(size, rate);
  s.rate_brightness_correlation = pearson(brightness, rate);
  s.rate_density_correlation = pearson(density, rate);
  return s;
}

void RunConfig::validate() const {
  params.validate();
  if (n_max < 1 || n_max > LadderIndex::kMaxSpins) {
    throw ValidationError("ensemble.n_max: must be in [1, " +
                          std::to_string(LadderIndex::kMaxSpins) + "]");
  }
  if (!(polarization > 0.0 && polarization < 1.0)) {
    throw ValidationError("ensemble.polarization: must be in (0, 1)");
  }
  grid.validate();
  irf.validate();
  if (noise_peak_counts < 0.0) throw ValidationError("noise.peak_counts: must be >= 0");
  if (background < 0.0) throw ValidationError("background: must be >= 0");
  if (mode == Mode::Fit || mode == Mode::Compare || mode == Mode::Scatter) {
    if (input.empty()) throw ValidationError("input: required for this mode");
  }
  fit.validate();
  if (g2_nbar_max < 1 || g2_nbar_max > LadderIndex::kMaxSpins) {
    throw ValidationError("g2.nbar_max: out of range");
  }
  if (!(g2_tau_max > 0.0)) throw ValidationError("g2.tau_max: must be > 0");
  if (g2_n_tau < 2) throw ValidationError("g2.n_tau: must be >= 2");
  if (!(dd_separation > 0.0)) throw ValidationError("dd.separation: must be > 0");
  if (!(dd_density > 0.0)) throw ValidationError("dd.density: must be > 0");
}

std::string mode_name(RunConfig::Mode mode) {
  switch (mode) {
    case RunConfig::Mode::Simulate: return "simulate";
    case RunConfig::Mode::Fit: return "fit";
    case RunConfig::Mode::G2: return "g2";
    case RunConfig::Mode::Compare: return "compare";
    case RunConfig::Mode::DdEstimate: return "dd-estimate";
    case RunConfig::Mode::Scatter: return "scatter";
  }
  return "?";
}

namespace {

using nlohmann::json;

[[noreturn]] void bad_field(const std::string& path, const std::string& why) {
  throw ValidationError("config." + path + ": " + why);
}

double get_number(const json& j, const std::string& path) {
  if (!j.is_number()) bad_field(path, "must be a number");
  return j.get<double>();
}

void check_keys(const json& j, const std::string& path,
                std::initializer_list<const char*> allowed) {
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) {
      if (key == a) {
        ok = true;
        break;
      }
    }
    if (!ok) bad_field(path.empty() ? key : path + "." + key, "unknown key");
  }
}

Eigen::Vector3d get_vec3(const json& j, const std::string& path) {
  if (!j.is_array() || j.size() != 3) bad_field(path, "must be an array of 3 numbers");
  Eigen::Vector3d v;
  for (int i = 0; i < 3; ++i) v[i] = get_number(j[static_cast<std::size_t>(i)], path);
  return v;
}

}  // namespace

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& err) {
    throw ValidationError(std::string("config: JSON parse error: ") + err.what());
  }

  RunConfig cfg;
  check_keys(j, "",
             {"mode", "seed", "out_dir", "input", "params", "ensemble", "initial_state",
              "grid", "irf", "noise", "background", "fit", "g2", "dd"});

  if (j.contains("mode")) {
    const std::string m = j["mode"].is_string() ? j["mode"].get<std::string>() : "";
    if (m == "simulate") cfg.mode = RunConfig::Mode::Simulate;
    else if (m == "fit") cfg.mode = RunConfig::Mode::Fit;
    else if (m == "g2") cfg.mode = RunConfig::Mode::G2;
    else if (m == "compare") cfg.mode = RunConfig::Mode::Compare;
    else if (m == "dd-estimate") cfg.mode = RunConfig::Mode::DdEstimate;
    else if (m == "scatter") cfg.mode = RunConfig::Mode::Scatter;
    else bad_field("mode", "must be simulate|fit|g2|compare|dd-estimate|scatter");
  }
  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned()) bad_field("seed", "must be a non-negative integer");
    cfg.seed = j["seed"].get<std::uint64_t>();
  }
  if (j.contains("out_dir")) cfg.out_dir = j["out_dir"].get<std::string>();
  if (j.contains("input")) cfg.input = j["input"].get<std::string>();

  cfg.params = bulk_nv_rates();
  if (j.contains("params")) {
    const auto& p = j["params"];
    check_keys(p, "params",
               {"gamma_mhz", "gamma_isc0_mhz", "gamma_isc1_mhz", "gamma_d0_mhz",
                "gamma_d1_mhz"});
    if (p.contains("gamma_mhz")) {
      cfg.params.gamma = units::rate_from_mhz(get_number(p["gamma_mhz"], "params.gamma_mhz"));
    }
    if (p.contains("gamma_isc0_mhz")) {
      cfg.params.gamma_isc_0 =
          units::rate_from_mhz(get_number(p["gamma_isc0_mhz"], "params.gamma_isc0_mhz"));
    }
    if (p.contains("gamma_isc1_mhz")) {
      cfg.params.gamma_isc_1 =
          units::rate_from_mhz(get_number(p["gamma_isc1_mhz"], "params.gamma_isc1_mhz"));
    }
    if (p.contains("gamma_d0_mhz")) {
      cfg.params.gamma_d_0 =
          units::rate_from_mhz(get_number(p["gamma_d0_mhz"], "params.gamma_d0_mhz"));
    }
    if (p.contains("gamma_d1_mhz")) {
      cfg.params.gamma_d_1 =
          units::rate_from_mhz(get_number(p["gamma_d1_mhz"], "params.gamma_d1_mhz"));
    }
  }

  if (j.contains("ensemble")) {
    const auto& e = j["ensemble"];
    check_keys(e, "ensemble", {"n_max", "polarization", "s0", "s1"});
    if (e.contains("n_max")) {
      const double n = get_number(e["n_max"], "ensemble.n_max");
      if (n != std::floor(n)) bad_field("ensemble.n_max", "must be an integer");
      cfg.n_max = static_cast<int>(n);
    }
    if (e.contains("polarization")) {
      cfg.polarization = get_number(e["polarization"], "ensemble.polarization");
    }
    if (e.contains("s0") || e.contains("s1")) {
      DomainSets sets;
      for (const auto& [key, dst] : {std::pair{"s0", &sets.s0}, std::pair{"s1", &sets.s1}}) {
        if (!e.contains(key)) continue;
        if (!e[key].is_array()) bad_field(std::string("ensemble.") + key, "must be an array");
        for (const auto& v : e[key]) {
          const double n = get_number(v, std::string("ensemble.") + key);
          if (n != std::floor(n) || n < 1) {
            bad_field(std::string("ensemble.") + key, "sizes must be positive integers");
          }
          dst->push_back(static_cast<int>(n));
        }
      }
      cfg.domain_sets = sets;
    }
  }

  if (j.contains("initial_state")) {
    const auto& s = j["initial_state"];
    if (s.is_string()) {
      const std::string k = s.get<std::string>();
      if (k == "mixed") {
        cfg.initial_state.kind = InitialStateSpec::Kind::MaximallyMixedTopLadder;
      } else if (k == "allup") {
        cfg.initial_state.kind = InitialStateSpec::Kind::AllUp;
      } else {
        bad_field("initial_state", "must be mixed|allup|array of weights");
      }
    } else if (s.is_array()) {
      std::vector<double> w;
      for (const auto& v : s) w.push_back(get_number(v, "initial_state"));
      cfg.initial_state.kind = InitialStateSpec::Kind::Custom;
      cfg.initial_state.custom_weights = w;
    } else {
      bad_field("initial_state", "must be mixed|allup|array of weights");
    }
  }

  if (j.contains("grid")) {
    const auto& g = j["grid"];
    check_keys(g, "grid", {"t_start_ns", "t_end_ns", "n_bins", "spacing"});
    if (g.contains("t_start_ns")) {
      cfg.grid.t_start = units::seconds_from_ns(get_number(g["t_start_ns"], "grid.t_start_ns"));
    }
    if (g.contains("t_end_ns")) {
      cfg.grid.t_end = units::seconds_from_ns(get_number(g["t_end_ns"], "grid.t_end_ns"));
    }
    if (g.contains("n_bins")) {
      const double n = get_number(g["n_bins"], "grid.n_bins");
      if (n != std::floor(n) || n < 2) bad_field("grid.n_bins", "must be an integer >= 2");
      cfg.grid.n_points = static_cast<int>(n);
    }
    if (g.contains("spacing")) {
      const std::string sp = g["spacing"].get<std::string>();
      if (sp == "linear") cfg.grid.spacing = TimeGrid::Spacing::Linear;
      else if (sp == "log") cfg.grid.spacing = TimeGrid::Spacing::Log;
      else bad_field("grid.spacing", "must be linear|log");
    }
  }

  if (j.contains("irf")) {
    const auto& i = j["irf"];
    check_keys(i, "irf", {"fwhm_ps", "kernel"});
    if (i.contains("kernel")) {
      cfg.irf.shape = IrfSpec::Shape::Measured;
      for (const auto& v : i["kernel"]) cfg.irf.kernel.push_back(get_number(v, "irf.kernel"));
    } else if (i.contains("fwhm_ps")) {
      cfg.irf.shape = IrfSpec::Shape::Gaussian;
      cfg.irf.fwhm = units::seconds_from_ps(get_number(i["fwhm_ps"], "irf.fwhm_ps"));
    }
  }

  if (j.contains("noise")) {
    const auto& n = j["noise"];
    check_keys(n, "noise", {"peak_counts"});
    if (n.contains("peak_counts")) {
      cfg.noise_peak_counts = get_number(n["peak_counts"], "noise.peak_counts");
    }
  }
  if (j.contains("background")) cfg.background = get_number(j["background"], "background");

  if (j.contains("fit")) {
    const auto& f = j["fit"];
    check_keys(f, "fit",
               {"n_range", "gamma_d0_bounds_mhz", "gamma_d1_bounds_mhz", "p0_bounds",
                "tail_window_ns", "loss", "fixed_gamma_mhz", "fixed_gamma_d0_mhz",
                "fixed_gamma_d1_mhz", "fixed_p0", "fixed_n_max", "threads",
                "max_evaluations"});
    const auto get_pair = [&](const json& v, const std::string& p) {
      if (!v.is_array() || v.size() != 2) bad_field(p, "must be [lo, hi]");
      return std::pair<double, double>{get_number(v[0], p), get_number(v[1], p)};
    };
    if (f.contains("n_range")) {
      const auto [lo, hi] = get_pair(f["n_range"], "fit.n_range");
      cfg.fit.n_range = {static_cast<int>(lo), static_cast<int>(hi)};
    }
    if (f.contains("gamma_d0_bounds_mhz")) {
      const auto [lo, hi] = get_pair(f["gamma_d0_bounds_mhz"], "fit.gamma_d0_bounds_mhz");
      cfg.fit.dephasing_bounds_0 = {units::rate_from_mhz(lo), units::rate_from_mhz(hi)};
    }
    if (f.contains("gamma_d1_bounds_mhz")) {
      const auto [lo, hi] = get_pair(f["gamma_d1_bounds_mhz"], "fit.gamma_d1_bounds_mhz");
      cfg.fit.dephasing_bounds_1 = {units::rate_from_mhz(lo), units::rate_from_mhz(hi)};
    }
    if (f.contains("p0_bounds")) cfg.fit.polarization_bounds = get_pair(f["p0_bounds"], "fit.p0_bounds");
    if (f.contains("tail_window_ns")) {
      const auto [lo, hi] = get_pair(f["tail_window_ns"], "fit.tail_window_ns");
      cfg.fit.tail_window = {units::seconds_from_ns(lo), units::seconds_from_ns(hi)};
    }
    if (f.contains("loss")) {
      const std::string l = f["loss"].get<std::string>();
      if (l == "poisson") cfg.fit.loss = FitLoss::PoissonNll;
      else if (l == "lsq") cfg.fit.loss = FitLoss::LeastSquares;
      else bad_field("fit.loss", "must be poisson|lsq");
    }
    if (f.contains("fixed_gamma_mhz")) {
      cfg.fit.fixed_gamma =
          units::rate_from_mhz(get_number(f["fixed_gamma_mhz"], "fit.fixed_gamma_mhz"));
    }
    if (f.contains("fixed_gamma_d0_mhz")) {
      cfg.fit.fixed_gamma_d_0 =
          units::rate_from_mhz(get_number(f["fixed_gamma_d0_mhz"], "fit.fixed_gamma_d0_mhz"));
    }
    if (f.contains("fixed_gamma_d1_mhz")) {
      cfg.fit.fixed_gamma_d_1 =
          units::rate_from_mhz(get_number(f["fixed_gamma_d1_mhz"], "fit.fixed_gamma_d1_mhz"));
    }
    if (f.contains("fixed_p0")) cfg.fit.fixed_p0 = get_number(f["fixed_p0"], "fit.fixed_p0");
    if (f.contains("fixed_n_max")) {
      cfg.fit.fixed_n_max = static_cast<int>(get_number(f["fixed_n_max"], "fit.fixed_n_max"));
    }
    if (f.contains("threads")) {
      cfg.fit.threads = static_cast<int>(get_number(f["threads"], "fit.threads"));
    }
    if (f.contains("max_evaluations")) {
      cfg.fit.max_evaluations =
          static_cast<int>(get_number(f["max_evaluations"], "fit.max_evaluations"));
    }
    cfg.fit.gamma_isc_0 = cfg.params.gamma_isc_0;
    cfg.fit.gamma_isc_1 = cfg.params.gamma_isc_1;
  } else {
    cfg.fit.gamma_isc_0 = cfg.params.gamma_isc_0;
    cfg.fit.gamma_isc_1 = cfg.params.gamma_isc_1;
  }
  cfg.fit.seed = cfg.seed;

  if (j.contains("g2")) {
    const auto& g = j["g2"];
    check_keys(g, "g2", {"nbar_max", "tau_max_ns", "n_tau"});
    if (g.contains("nbar_max")) {
      cfg.g2_nbar_max = static_cast<int>(get_number(g["nbar_max"], "g2.nbar_max"));
    }
    if (g.contains("tau_max_ns")) {
      cfg.g2_tau_max = units::seconds_from_ns(get_number(g["tau_max_ns"], "g2.tau_max_ns"));
    }
    if (g.contains("n_tau")) cfg.g2_n_tau = static_cast<int>(get_number(g["n_tau"], "g2.n_tau"));
  }

  if (j.contains("dd")) {
    const auto& d = j["dd"];
    check_keys(d, "dd", {"separation_nm", "density_per_m3", "gamma_mhz", "d1", "d2", "n_hat"});
    if (d.contains("separation_nm")) {
      cfg.dd_separation = units::meters_from_nm(get_number(d["separation_nm"], "dd.separation_nm"));
    }
    if (d.contains("density_per_m3")) {
      cfg.dd_density = get_number(d["density_per_m3"], "dd.density_per_m3");
    }
    if (d.contains("gamma_mhz")) {
      cfg.params.gamma = units::rate_from_mhz(get_number(d["gamma_mhz"], "dd.gamma_mhz"));
    }
    if (d.contains("d1")) cfg.dd_d1 = get_vec3(d["d1"], "dd.d1");
    if (d.contains("d2")) cfg.dd_d2 = get_vec3(d["d2"], "dd.d2");
    if (d.contains("n_hat")) cfg.dd_n_hat = get_vec3(d["n_hat"], "dd.n_hat");
  }

  cfg.validate();
  return cfg;
}

}  // namespace srsim
