#include "srsim/fitting.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <numeric>
#include <sstream>

#include "srsim/units.hpp"

namespace srsim {

bool DecayTrace::uniform(double rel_tol) const {
  const double h = bin_width();
  for (std::size_t i = 1; i + 1 < bin_edges.size(); ++i) {
    if (std::abs(bin_edges[i + 1] - bin_edges[i] - h) > rel_tol * h) return false;
  }
  return true;
}

void DecayTrace::validate() const {
  if (counts.empty()) throw ValidationError("trace.counts: empty");
  if (bin_edges.size() != counts.size() + 1) {
    throw ValidationError("trace.bin_edges: must have counts.size() + 1 entries");
  }
  for (std::size_t i = 0; i + 1 < bin_edges.size(); ++i) {
    if (!(bin_edges[i + 1] > bin_edges[i])) {
      throw ValidationError("trace.bin_edges: must be strictly increasing");
    }
  }
  for (double c : counts) {
    if (!std::isfinite(c) || c < 0.0) {
      throw ValidationError("trace.counts: must be finite and >= 0");
    }
  }
  if (background < 0.0) throw ValidationError("trace.background: must be >= 0");
  irf.validate();
}

FitConfig::FitConfig()
    : dephasing_bounds_0{units::rate_from_mhz(1.0), units::rate_from_mhz(1000.0)},
      dephasing_bounds_1{units::rate_from_mhz(5.0), units::rate_from_mhz(3000.0)},
      gamma_isc_0(units::rate_from_mhz(1.8)),
      gamma_isc_1(units::rate_from_mhz(9.4)) {}

void FitConfig::validate() const {
  if (n_range.first < 1 || n_range.second < n_range.first ||
      n_range.second > LadderIndex::kMaxSpins) {
    throw ValidationError("fit.n_range: must satisfy 1 <= lo <= hi <= cap");
  }
  for (const auto& [name, b] :
       {std::pair{"fit.dephasing_bounds_0", dephasing_bounds_0},
        std::pair{"fit.dephasing_bounds_1", dephasing_bounds_1}}) {
    if (!(b.first > 0.0 && b.second > b.first)) {
      throw ValidationError(std::string(name) + ": must satisfy 0 < lo < hi");
    }
  }
  if (!(polarization_bounds.first > 0.0 && polarization_bounds.second < 1.0 &&
        polarization_bounds.second > polarization_bounds.first)) {
    throw ValidationError("fit.polarization_bounds: must satisfy 0 < lo < hi < 1");
  }
  if (gamma_isc_0 < 0.0 || gamma_isc_1 < 0.0) {
    throw ValidationError("fit.gamma_isc: must be >= 0");
  }
  if (max_evaluations < 10) throw ValidationError("fit.max_evaluations: must be >= 10");
  if (threads < 1) throw ValidationError("fit.threads: must be >= 1");
  if (fixed_n_max && (*fixed_n_max < 1 || *fixed_n_max > LadderIndex::kMaxSpins)) {
    throw ValidationError("fit.fixed_n_max: out of range");
  }
}

namespace {

std::vector<double> bin_centers(const DecayTrace& trace) {
  std::vector<double> c(trace.counts.size());
  for (std::size_t i = 0; i < c.size(); ++i) {
    c[i] = 0.5 * (trace.bin_edges[i] + trace.bin_edges[i + 1]);
  }
  return c;
}

std::vector<double> adjusted_counts(const DecayTrace& trace, double background) {
  std::vector<double> c(trace.counts.size());
  for (std::size_t i = 0; i < c.size(); ++i) {
    c[i] = std::max(0.0, trace.counts[i] - background);
  }
  return c;
}

// Median counts of the bins well before the peak; 0 if the trace has no
// usable pre-pulse region.
double estimate_background(const DecayTrace& trace) {
  const auto peak =
      std::max_element(trace.counts.begin(), trace.counts.end()) - trace.counts.begin();
  const double h = trace.bin_width();
  double sigma_bins = 1.0;
  if (trace.irf.shape == IrfSpec::Shape::Gaussian && trace.irf.fwhm > 0.0) {
    sigma_bins = trace.irf.fwhm / (2.355 * h);
  }
  const auto cut = static_cast<long>(peak - std::lround(10.0 * std::max(1.0, sigma_bins)));
  if (cut < 8) return 0.0;
  std::vector<double> pre(trace.counts.begin(), trace.counts.begin() + cut);
  std::nth_element(pre.begin(), pre.begin() + pre.size() / 2, pre.end());
  return pre[pre.size() / 2];
}

struct ExpFit {
  double rate = 0.0;       // 1/s
  double log_amp = 0.0;    // at t = 0
  int n_used = 0;
};

// Weighted linear regression of ln(c) on t with Poisson weights w = c.
// Biased for sparse counts (zero bins are censored); used only to seed the
// reference-model searches.
ExpFit weighted_exponential_fit(const std::vector<double>& t, const std::vector<double>& c) {
  double sw = 0, swt = 0, swy = 0, swtt = 0, swty = 0;
  int n_used = 0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (!(c[i] > 0.0)) continue;
    const double w = c[i];
    const double y = std::log(c[i]);
    sw += w;
    swt += w * t[i];
    swy += w * y;
    swtt += w * t[i] * t[i];
    swty += w * t[i] * y;
    ++n_used;
  }
  ExpFit fit;
  fit.n_used = n_used;
  if (n_used < 2) return fit;
  const double denom = sw * swtt - swt * swt;
  if (denom <= 0.0) return fit;
  const double slope = (sw * swty - swt * swy) / denom;
  fit.rate = -slope;
  fit.log_amp = (swy - slope * swt) / sw;
  return fit;
}

// Poisson maximum-likelihood rate of c_i ~ A exp(-k t_i). With the amplitude
// profiled out, the score equation reduces to matching the model's mean
// emission time to the data's, which bisection solves exactly; zero-count
// bins enter correctly instead of being censored.
double mle_exponential_rate(const std::vector<double>& t, const std::vector<double>& c) {
  double t_min = t.front(), t_max = t.front(), sum_c = 0.0, sum_ct = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    t_min = std::min(t_min, t[i]);
    t_max = std::max(t_max, t[i]);
    sum_c += c[i];
    sum_ct += c[i] * t[i];
  }
  const double span = t_max - t_min;
  if (!(sum_c > 0.0) || !(span > 0.0)) throw FitError("exponential fit: no counts");
  const double tbar_data = sum_ct / sum_c;

  const auto model_mean_time = [&](double k) {
    double num = 0.0, den = 0.0;
    for (double ti : t) {
      const double w = std::exp(-k * (ti - t_min));
      num += w * ti;
      den += w;
    }
    return num / den;
  };

  double k_lo = 1e-4 / span, k_hi = 1e4 / span;
  if (model_mean_time(k_lo) <= tbar_data) {
    throw FitError("exponential fit: no decaying trend in the window");
  }
  if (model_mean_time(k_hi) >= tbar_data) {
    throw FitError("exponential fit: decay faster than the window resolves");
  }
  for (int iter = 0; iter < 200; ++iter) {
    const double k = std::sqrt(k_lo * k_hi);
    if (model_mean_time(k) > tbar_data) {
      k_lo = k;
    } else {
      k_hi = k;
    }
    if (k_hi / k_lo < 1.0 + 1e-14) break;
  }
  return std::sqrt(k_lo * k_hi);
}

struct LossEval {
  double loss = std::numeric_limits<double>::infinity();
  double amplitude = 0.0;
};

// Loss with the overall amplitude profiled out analytically.
LossEval profiled_loss(const std::vector<double>& model, const std::vector<double>& counts,
                       FitLoss kind) {
  LossEval ev;
  double sum_m = 0, sum_c = 0, sum_mm = 0, sum_cm = 0, peak_m = 0;
  for (std::size_t i = 0; i < model.size(); ++i) {
    sum_m += model[i];
    sum_c += counts[i];
    sum_mm += model[i] * model[i];
    sum_cm += counts[i] * model[i];
    peak_m = std::max(peak_m, model[i]);
  }
  if (!(sum_m > 0.0) || !(peak_m > 0.0)) return ev;

  if (kind == FitLoss::LeastSquares) {
    const double s = sum_mm > 0.0 ? std::max(0.0, sum_cm / sum_mm) : 0.0;
    double loss = 0.0;
    for (std::size_t i = 0; i < model.size(); ++i) {
      const double r = s * model[i] - counts[i];
      loss += r * r;
    }
    ev.loss = loss;
    ev.amplitude = s;
    return ev;
  }

  // Poisson deviance; optimal scale is sum(c)/sum(m).
  const double s = sum_c > 0.0 ? sum_c / sum_m : 0.0;
  const double floor = 1e-12 * peak_m * std::max(s, 1e-300);
  double loss = 0.0;
  for (std::size_t i = 0; i < model.size(); ++i) {
    const double m = std::max(s * model[i], floor);
    const double c = counts[i];
    loss += 2.0 * (m - c);
    if (c > 0.0) loss += 2.0 * c * std::log(c / m);
  }
  ev.loss = loss;
  ev.amplitude = s;
  return ev;
}

// ---------------------------------------------------------------------------
// Bounded Nelder-Mead on sigmoid-transformed coordinates. Deterministic.

struct BoundedParam {
  double lo = 0.0;
  double hi = 1.0;
  bool log_scale = false;

  double value(double x) const {
    const double s = 1.0 / (1.0 + std::exp(-x));
    if (log_scale) return lo * std::exp(std::log(hi / lo) * s);
    return lo + (hi - lo) * s;
  }
  double coordinate(double v) const {
    double s = 0.0;
    if (log_scale) {
      s = std::log(std::clamp(v, lo, hi) / lo) / std::log(hi / lo);
    } else {
      s = (std::clamp(v, lo, hi) - lo) / (hi - lo);
    }
    s = std::clamp(s, 1e-6, 1.0 - 1e-6);
    return std::log(s / (1.0 - s));
  }
};

struct NelderMeadResult {
  std::vector<double> x;
  double f = std::numeric_limits<double>::infinity();
  bool converged = false;
  int evaluations = 0;
};

template <typename F>
NelderMeadResult nelder_mead(F&& objective, std::vector<double> x0, int max_evals,
                             double step = 0.8) {
  const std::size_t d = x0.size();
  NelderMeadResult res;
  if (d == 0) {
    res.x = x0;
    res.f = objective(x0);
    res.converged = true;
    res.evaluations = 1;
    return res;
  }

  std::vector<std::vector<double>> pts(d + 1, x0);
  std::vector<double> fv(d + 1);
  for (std::size_t i = 1; i <= d; ++i) pts[i][i - 1] += step;
  int evals = 0;
  for (std::size_t i = 0; i <= d; ++i) {
    fv[i] = objective(pts[i]);
    ++evals;
  }

  const auto order = [&]() {
    std::vector<std::size_t> idx(d + 1);
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return fv[a] < fv[b]; });
    std::vector<std::vector<double>> p2(d + 1);
    std::vector<double> f2(d + 1);
    for (std::size_t i = 0; i <= d; ++i) {
      p2[i] = pts[idx[i]];
      f2[i] = fv[idx[i]];
    }
    pts.swap(p2);
    fv.swap(f2);
  };

  order();
  while (evals < max_evals) {
    // Convergence: flat simplex in both value and extent.
    double spread = 0.0, extent = 0.0;
    for (std::size_t i = 1; i <= d; ++i) {
      spread = std::max(spread, std::abs(fv[i] - fv[0]));
      for (std::size_t j = 0; j < d; ++j) {
        extent = std::max(extent, std::abs(pts[i][j] - pts[0][j]));
      }
    }
    if (spread <= 1e-7 * (1.0 + std::abs(fv[0])) && extent <= 2e-3) {
      res.converged = true;
      break;
    }

    std::vector<double> centroid(d, 0.0);
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = 0; j < d; ++j) centroid[j] += pts[i][j];
    }
    for (double& c : centroid) c /= static_cast<double>(d);

    const auto blend = [&](double alpha) {
      std::vector<double> p(d);
      for (std::size_t j = 0; j < d; ++j) {
        p[j] = centroid[j] + alpha * (pts[d][j] - centroid[j]);
      }
      return p;
    };

    const auto reflected = blend(-1.0);
    const double fr = objective(reflected);
    ++evals;
    if (fr < fv[0]) {
      const auto expanded = blend(-2.0);
      const double fe = objective(expanded);
      ++evals;
      if (fe < fr) {
        pts[d] = expanded;
        fv[d] = fe;
      } else {
        pts[d] = reflected;
        fv[d] = fr;
      }
    } else if (fr < fv[d - 1]) {
      pts[d] = reflected;
      fv[d] = fr;
    } else {
      const auto contracted = blend(fr < fv[d] ? -0.5 : 0.5);
      const double fc = objective(contracted);
      ++evals;
      if (fc < std::min(fr, fv[d])) {
        pts[d] = contracted;
        fv[d] = fc;
      } else {
        for (std::size_t i = 1; i <= d; ++i) {
          for (std::size_t j = 0; j < d; ++j) {
            pts[i][j] = 0.5 * (pts[i][j] + pts[0][j]);
          }
          fv[i] = objective(pts[i]);
          ++evals;
        }
      }
    }
    order();
  }
  order();
  res.x = pts[0];
  res.f = fv[0];
  res.evaluations = evals;
  return res;
}

// ---------------------------------------------------------------------------

std::vector<double> model_at_bins(const std::vector<double>& edges_start, int n_bins,
                                  const RateParams& params, int n_max, double p0,
                                  const IrfSpec& irf, TraceCache* cache) {
  TimeGrid grid{.t_start = edges_start.empty() ? 0.0 : edges_start.front(),
                .t_end = edges_start.empty() ? 0.0 : edges_start.back(),
                .n_points = n_bins,
                .spacing = TimeGrid::Spacing::Linear};
  const auto ens = ensemble_for_max_size(n_max, p0);
  InitialStateSpec init{.kind = InitialStateSpec::Kind::MaximallyMixedTopLadder};
  auto trace = total_fluorescence(ens, params, init, grid, cache);
  trace = convolve_irf(trace, irf);
  return trace.rates;
}

std::vector<double> left_edges(const DecayTrace& trace) {
  std::vector<double> t(trace.bin_edges.begin(), trace.bin_edges.end() - 1);
  return t;
}

struct SrObjectiveContext {
  const DecayTrace* trace = nullptr;
  std::vector<double> counts;  // background-adjusted
  std::vector<double> edges;
  RateParams base;  // gamma + ISC pinned, dephasing filled per evaluation
  FitLoss loss = FitLoss::PoissonNll;
  TraceCache* cache = nullptr;
};

double sr_objective(const SrObjectiveContext& ctx, int n_max, double gd0, double gd1,
                    double p0, double* amplitude_out) {
  RateParams p = ctx.base;
  p.gamma_d_0 = gd0;
  p.gamma_d_1 = gd1;
  const auto model = model_at_bins(ctx.edges, static_cast<int>(ctx.edges.size()), p,
                                   n_max, p0, ctx.trace->irf, ctx.cache);
  const auto ev = profiled_loss(model, ctx.counts, ctx.loss);
  if (amplitude_out != nullptr) *amplitude_out = ev.amplitude;
  return ev.loss;
}

struct GridPointResult {
  int n_max = 1;
  NelderMeadResult nm;
  std::vector<BoundedParam> transforms;
  std::vector<int> free_slots;  // 0: gd0, 1: gd1, 2: p0
  double gd0 = 0, gd1 = 0, p0 = 0;
};

}  // namespace

double tail_fit_gamma(const DecayTrace& trace, std::pair<double, double> window,
                      double isc_rate) {
  trace.validate();
  const double bg = trace.background > 0.0 ? trace.background : estimate_background(trace);
  const auto centers = bin_centers(trace);
  const auto adj = adjusted_counts(trace, bg);

  if (window.first == 0.0 && window.second == 0.0) {
    // Auto window: the late half of the range that still carries signal,
    // well after the collective burst.
    double peak = 0.0;
    std::size_t k_peak = 0;
    for (std::size_t i = 0; i < adj.size(); ++i) {
      if (adj[i] > peak) {
        peak = adj[i];
        k_peak = i;
      }
    }
    if (!(peak > 0.0)) throw FitError("tail fit: empty trace");
    const double floor = 1e-4 * peak;
    std::size_t k_hi = adj.size() - 1;
    while (k_hi > k_peak && adj[k_hi] < floor) --k_hi;
    const double t_hi = centers[k_hi];
    const double t_peak = centers[k_peak];
    if (!(t_hi > t_peak)) throw FitError("tail fit: no usable tail after the peak");
    window = {t_peak + 0.5 * (t_hi - t_peak), t_hi};
  }
  if (!(window.second > window.first)) {
    throw ValidationError("tail window: must satisfy lo < hi");
  }

  std::vector<double> t, c;
  int above = 0;
  for (std::size_t i = 0; i < centers.size(); ++i) {
    if (centers[i] < window.first || centers[i] > window.second) continue;
    t.push_back(centers[i]);
    c.push_back(adj[i]);
    if (adj[i] > 0.0) ++above;
  }
  if (above < 10) {
    throw FitError("tail fit: fewer than 10 bins with counts above background");
  }
  const double rate = mle_exponential_rate(t, c);
  if (rate * (window.second - window.first) < 0.05) {
    throw FitError("tail fit: no decaying tail found");
  }
  const double gamma = rate - isc_rate;
  if (!(gamma > 0.0)) {
    throw FitError("tail fit: tail decay is slower than the pinned ISC rate");
  }
  return gamma;
}

double lifetime_1e(const DecayTrace& trace, double window) {
  trace.validate();
  if (!(window > 0.0)) throw DomainError("lifetime_1e: window must be > 0");
  const double bg = trace.background > 0.0 ? trace.background : estimate_background(trace);
  const auto counts = adjusted_counts(trace, bg);
  const auto centers = bin_centers(trace);

  const auto peak_it = std::max_element(counts.begin(), counts.end());
  if (!(*peak_it > 0.0)) throw FitError("lifetime_1e: no peak found");
  const auto peak = static_cast<std::size_t>(peak_it - counts.begin());
  if (peak + 1 >= counts.size()) throw FitError("lifetime_1e: peak at trace end");

  const double t_peak = centers[peak];
  std::vector<double> t, c;
  int usable = 0;
  for (std::size_t i = peak; i < counts.size(); ++i) {
    if (centers[i] > t_peak + window) break;
    t.push_back(centers[i] - t_peak);
    c.push_back(counts[i]);
    if (counts[i] > 0.0) ++usable;
  }
  if (usable < 5) {
    throw FitError("lifetime_1e: fewer than 5 usable bins after the peak");
  }
  double rate = 0.0;
  try {
    rate = mle_exponential_rate(t, c);
  } catch (const FitError&) {
    throw FitError("lifetime_1e: no decay after the peak");
  }
  return 1.0 / rate;
}

double initial_lifetime(const DecayTrace& trace, double slow_threshold) {
  double lt = lifetime_1e(trace);
  if (!(slow_threshold > 0.0) || lt <= slow_threshold) return lt;
  // Slow decay: one nanosecond resolves only a few percent of the curve, so
  // widen the fit window to the measured 1/e time until self-consistent.
  for (int iter = 0; iter < 8; ++iter) {
    const double next = lifetime_1e(trace, lt);
    if (std::abs(next - lt) < 0.02 * lt) return next;
    lt = next;
  }
  return lt;
}

std::vector<double> superradiant_model_curve(const DecayTrace& trace,
                                             const RateParams& params, int n_max,
                                             double p0, TraceCache* cache) {
  trace.validate();
  if (!trace.uniform()) throw ValidationError("trace: superradiant model needs uniform bins");
  const auto edges = left_edges(trace);
  return model_at_bins(edges, trace.n_bins(), params, n_max, p0, trace.irf, cache);
}

FitResult fit_superradiant(const DecayTrace& trace, const FitConfig& config) {
  trace.validate();
  config.validate();
  if (!trace.uniform()) throw ValidationError("trace: fit requires uniform bins");
  if (trace.n_bins() < 100) throw FitError("fit: trace must have at least 100 bins");

  const double bg = trace.background > 0.0 ? trace.background : estimate_background(trace);

  SrObjectiveContext ctx;
  ctx.trace = &trace;
  ctx.counts = adjusted_counts(trace, bg);
  ctx.edges = left_edges(trace);
  ctx.loss = config.loss;
  TraceCache cache;
  ctx.cache = &cache;

  ctx.base.gamma_isc_0 = config.gamma_isc_0;
  ctx.base.gamma_isc_1 = config.gamma_isc_1;
  ctx.base.gamma = config.fixed_gamma
                       ? *config.fixed_gamma
                       : tail_fit_gamma(trace, config.tail_window, config.gamma_isc_0);

  // The trace must span several tail lifetimes or the tail pin is meaningless.
  const double tail_rate = ctx.base.gamma + config.gamma_isc_0;
  if (trace.bin_edges.back() * tail_rate < 5.0) {
    throw FitError("fit: trace spans fewer than 5 tail lifetimes");
  }

  std::vector<int> n_values;
  if (config.fixed_n_max) {
    n_values.push_back(*config.fixed_n_max);
  } else {
    for (int n = config.n_range.first; n <= config.n_range.second; ++n) n_values.push_back(n);
  }

  const BoundedParam tr_gd0{config.dephasing_bounds_0.first, config.dephasing_bounds_0.second, true};
  const BoundedParam tr_gd1{config.dephasing_bounds_1.first, config.dephasing_bounds_1.second, true};
  const BoundedParam tr_p0{config.polarization_bounds.first, config.polarization_bounds.second, false};

  // Free parameter slots: 0 = gamma_d_0, 1 = gamma_d_1, 2 = p0. Dephasing has
  // no effect on a single spin (both J = 1/2 states sit at |M| = J), so those
  // axes are dropped from the simplex when n_max = 1.
  const auto free_layout = [&](int n_max, std::vector<BoundedParam>& transforms,
                               std::vector<int>& slots) {
    transforms.clear();
    slots.clear();
    const bool deph_active = n_max > 1;
    if (!config.fixed_gamma_d_0 && deph_active) {
      transforms.push_back(tr_gd0);
      slots.push_back(0);
    }
    if (!config.fixed_gamma_d_1 && deph_active) {
      transforms.push_back(tr_gd1);
      slots.push_back(1);
    }
    if (!config.fixed_p0) {
      transforms.push_back(tr_p0);
      slots.push_back(2);
    }
  };
  const auto decode = [&](const std::vector<BoundedParam>& transforms,
                          const std::vector<int>& slots, const std::vector<double>& x,
                          double& gd0, double& gd1, double& p0) {
    gd0 = config.fixed_gamma_d_0.value_or(tr_gd0.value(0.0));
    gd1 = config.fixed_gamma_d_1.value_or(tr_gd1.value(0.0));
    p0 = config.fixed_p0.value_or(tr_p0.value(0.0));
    for (std::size_t i = 0; i < slots.size(); ++i) {
      const double v = transforms[i].value(x[i]);
      if (slots[i] == 0) gd0 = v;
      if (slots[i] == 1) gd1 = v;
      if (slots[i] == 2) p0 = v;
    }
  };

  const auto solve_grid_point = [&](int n_max) {
    GridPointResult gp;
    gp.n_max = n_max;
    free_layout(n_max, gp.transforms, gp.free_slots);

    const auto objective = [&](const std::vector<double>& x) {
      double gd0 = 0, gd1 = 0, p0 = 0;
      decode(gp.transforms, gp.free_slots, x, gd0, gd1, p0);
      return sr_objective(ctx, n_max, gd0, gd1, p0, nullptr);
    };

    gp.nm = nelder_mead(objective, std::vector<double>(gp.transforms.size(), 0.0),
                        config.max_evaluations);
    decode(gp.transforms, gp.free_slots, gp.nm.x, gp.gd0, gp.gd1, gp.p0);
    return gp;
  };

  std::vector<GridPointResult> grid(n_values.size());
  if (config.threads > 1 && n_values.size() > 1) {
    std::vector<std::future<GridPointResult>> futures;
    futures.reserve(n_values.size());
    for (int n : n_values) {
      futures.push_back(std::async(std::launch::async, solve_grid_point, n));
    }
    for (std::size_t i = 0; i < futures.size(); ++i) grid[i] = futures[i].get();
  } else {
    for (std::size_t i = 0; i < n_values.size(); ++i) grid[i] = solve_grid_point(n_values[i]);
  }

  std::size_t best = 0;
  for (std::size_t i = 1; i < grid.size(); ++i) {
    if (grid[i].nm.f < grid[best].nm.f) best = i;
  }
  GridPointResult& win = grid[best];

  // Refine the winning grid point from its own optimum.
  const auto polish_objective = [&](const std::vector<double>& x) {
    double gd0 = 0, gd1 = 0, p0 = 0;
    decode(win.transforms, win.free_slots, x, gd0, gd1, p0);
    return sr_objective(ctx, win.n_max, gd0, gd1, p0, nullptr);
  };
  const auto polished = nelder_mead(polish_objective, win.nm.x,
                                    std::max(60, config.max_evaluations / 2), 0.12);

  FitResult result;
  result.n_max = win.n_max;
  result.gamma = ctx.base.gamma;
  result.background = bg;
  decode(win.transforms, win.free_slots, polished.x, result.gamma_d_0, result.gamma_d_1,
         result.p0);

  double amplitude = 0.0;
  result.residual = sr_objective(ctx, result.n_max, result.gamma_d_0, result.gamma_d_1,
                                 result.p0, &amplitude);
  result.amplitude = amplitude;
  {
    SrObjectiveContext lsq_ctx = ctx;
    lsq_ctx.loss = FitLoss::LeastSquares;
    double lsq_amp = 0.0;
    result.lsq_residual = sr_objective(lsq_ctx, result.n_max, result.gamma_d_0,
                                       result.gamma_d_1, result.p0, &lsq_amp);
  }
  result.converged = polished.converged || win.nm.converged;

  if (!config.fixed_n_max) {
    if (result.n_max == config.n_range.second && config.n_range.second > 1) {
      result.warnings.push_back("n_max at upper bound of the search range");
    }
    if (result.n_max == config.n_range.first && config.n_range.first > 1) {
      result.warnings.push_back("n_max at lower bound of the search range");
    }
  }
  if (result.n_max == 1) {
    result.warnings.push_back("dephasing rates are not identifiable for n_max = 1");
  }

  // Covariance from the loss curvature over the free continuous parameters.
  if (!win.free_slots.empty()) {
    const std::size_t d = win.free_slots.size();
    std::vector<double> theta(d);
    for (std::size_t i = 0; i < d; ++i) {
      theta[i] = win.free_slots[i] == 0   ? result.gamma_d_0
                 : win.free_slots[i] == 1 ? result.gamma_d_1
                                          : result.p0;
    }
    const auto eval_theta = [&](const std::vector<double>& th) {
      double gd0 = result.gamma_d_0, gd1 = result.gamma_d_1, p0 = result.p0;
      for (std::size_t i = 0; i < d; ++i) {
        if (win.free_slots[i] == 0) gd0 = th[i];
        if (win.free_slots[i] == 1) gd1 = th[i];
        if (win.free_slots[i] == 2) p0 = std::clamp(th[i], 1e-4, 1.0 - 1e-4);
      }
      return sr_objective(ctx, result.n_max, gd0, gd1, p0, nullptr);
    };
    // Curvature in step-scaled (dimensionless) coordinates: the raw
    // parameters span rad/s and pure fractions, and a positive-definiteness
    // test across twenty orders of magnitude is meaningless in doubles.
    Eigen::MatrixXd hessian_scaled(d, d);
    const double f0 = result.residual;
    std::vector<double> step(d);
    for (std::size_t i = 0; i < d; ++i) {
      // Wide enough steps that the deviance change dominates evaluation
      // noise: 10% on rates, 0.02 absolute on the polarization.
      step[i] = win.free_slots[i] == 2 ? 0.02 : 0.10 * std::abs(theta[i]);
    }
    bool ok = true;
    for (std::size_t i = 0; i < d && ok; ++i) {
      for (std::size_t j = i; j < d && ok; ++j) {
        auto th = theta;
        double fpp, fpm, fmp, fmm;
        if (i == j) {
          th[i] = theta[i] + step[i];
          fpp = eval_theta(th);
          th[i] = theta[i] - step[i];
          fmm = eval_theta(th);
          hessian_scaled(i, j) = fpp - 2.0 * f0 + fmm;
        } else {
          th = theta; th[i] += step[i]; th[j] += step[j]; fpp = eval_theta(th);
          th = theta; th[i] += step[i]; th[j] -= step[j]; fpm = eval_theta(th);
          th = theta; th[i] -= step[i]; th[j] += step[j]; fmp = eval_theta(th);
          th = theta; th[i] -= step[i]; th[j] -= step[j]; fmm = eval_theta(th);
          hessian_scaled(i, j) = hessian_scaled(j, i) = 0.25 * (fpp - fpm - fmp + fmm);
        }
        if (!std::isfinite(hessian_scaled(i, j))) ok = false;
      }
    }
    if (ok) {
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(hessian_scaled);
      if (es.eigenvalues().minCoeff() > 1e-10 * std::abs(es.eigenvalues().maxCoeff())) {
        double scale = 2.0;  // deviance -> NLL curvature
        if (config.loss == FitLoss::LeastSquares) {
          const auto dof = static_cast<double>(ctx.counts.size()) -
                           static_cast<double>(d);
          scale = 2.0 * std::max(result.residual / std::max(dof, 1.0), 0.0);
        }
        const Eigen::MatrixXd inv = hessian_scaled.inverse();
        Eigen::MatrixXd cov(d, d);
        for (std::size_t i = 0; i < d; ++i) {
          for (std::size_t j = 0; j < d; ++j) {
            cov(i, j) = scale * inv(i, j) * step[i] * step[j];
          }
        }
        result.covariance_estimate = cov;
      } else {
        result.warnings.push_back("loss curvature not positive definite at the optimum");
      }
    }
  }

  if (!polished.converged && !win.nm.converged) {
    throw FitNonConvergence("fit: optimizer exhausted its budget without converging",
                            result);
  }
  return result;
}

namespace {

// Shared scaffolding for the analytic reference models: parameter search in
// log-tau space with amplitudes profiled by linear least squares.
std::vector<double> convolved_basis(const std::vector<double>& t, const IrfSpec& irf,
                                    const std::vector<double>& raw) {
  FluorescenceTrace tr;
  tr.times = t;
  tr.rates = raw;
  return convolve_irf(tr, irf).rates;
}

double crude_tau_estimate(const std::vector<double>& t, const std::vector<double>& c) {
  // Log-slope over the bins holding the first two decades below the peak.
  double peak = 0.0;
  for (double x : c) peak = std::max(peak, x);
  std::vector<double> tt, cc;
  for (std::size_t i = 0; i < c.size(); ++i) {
    if (c[i] > 0.01 * peak) {
      tt.push_back(t[i]);
      cc.push_back(c[i]);
    }
  }
  const auto fit = weighted_exponential_fit(tt, cc);
  if (fit.rate > 0.0) return 1.0 / fit.rate;
  return t.empty() ? 1e-9 : std::max(1e-12, 0.2 * t.back());
}

}  // namespace

FitResult fit_biexponential(const DecayTrace& trace) {
  trace.validate();
  if (!trace.uniform()) throw ValidationError("trace: fit requires uniform bins");
  const double bg = trace.background > 0.0 ? trace.background : estimate_background(trace);
  const auto counts = adjusted_counts(trace, bg);
  const auto t = left_edges(trace);
  const double dt = trace.bin_width();
  const double t_end = trace.bin_edges.back();

  const BoundedParam tr_tau{0.25 * dt, 50.0 * t_end, true};

  double best_a1 = 0, best_a2 = 0;
  const auto objective_full = [&](double tau1, double tau2, double* a1_out,
                                  double* a2_out) {
    std::vector<double> m1(t.size()), m2(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) {
      m1[i] = std::exp(-t[i] / tau1);
      m2[i] = std::exp(-t[i] / tau2);
    }
    m1 = convolved_basis(t, trace.irf, m1);
    m2 = convolved_basis(t, trace.irf, m2);
    // Profile both amplitudes; clamp negative solutions to the boundary.
    double s11 = 0, s12 = 0, s22 = 0, b1 = 0, b2 = 0;
    for (std::size_t i = 0; i < t.size(); ++i) {
      s11 += m1[i] * m1[i];
      s12 += m1[i] * m2[i];
      s22 += m2[i] * m2[i];
      b1 += m1[i] * counts[i];
      b2 += m2[i] * counts[i];
    }
    const double det = s11 * s22 - s12 * s12;
    double a1 = 0, a2 = 0;
    if (det > 1e-300 * s11 * s22) {
      a1 = (b1 * s22 - b2 * s12) / det;
      a2 = (b2 * s11 - b1 * s12) / det;
    }
    if (a1 < 0.0 || a2 < 0.0 || det <= 0.0) {
      const double c1 = s11 > 0 ? std::max(0.0, b1 / s11) : 0.0;
      const double c2 = s22 > 0 ? std::max(0.0, b2 / s22) : 0.0;
      double l1 = 0, l2 = 0;
      for (std::size_t i = 0; i < t.size(); ++i) {
        const double r1 = c1 * m1[i] - counts[i];
        const double r2 = c2 * m2[i] - counts[i];
        l1 += r1 * r1;
        l2 += r2 * r2;
      }
      if (l1 <= l2) {
        a1 = c1;
        a2 = 0.0;
      } else {
        a1 = 0.0;
        a2 = c2;
      }
    }
    double loss = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double r = a1 * m1[i] + a2 * m2[i] - counts[i];
      loss += r * r;
    }
    if (a1_out != nullptr) *a1_out = a1;
    if (a2_out != nullptr) *a2_out = a2;
    return loss;
  };

  const auto objective = [&](const std::vector<double>& x) {
    return objective_full(tr_tau.value(x[0]), tr_tau.value(x[1]), nullptr, nullptr);
  };

  const double tau_hat = crude_tau_estimate(t, counts);
  NelderMeadResult best;
  for (const auto& [f1, f2] : {std::pair{0.5, 5.0}, std::pair{1.0, 1.5}}) {
    std::vector<double> x0{tr_tau.coordinate(f1 * tau_hat), tr_tau.coordinate(f2 * tau_hat)};
    const auto r = nelder_mead(objective, x0, 320);
    if (r.f < best.f) best = r;
  }

  double tau1 = tr_tau.value(best.x[0]);
  double tau2 = tr_tau.value(best.x[1]);
  const double loss = objective_full(tau1, tau2, &best_a1, &best_a2);
  if (tau1 > tau2) {
    std::swap(tau1, tau2);
    std::swap(best_a1, best_a2);
  }

  FitResult result;
  result.n_max = 0;
  result.background = bg;
  result.residual = loss;
  result.lsq_residual = loss;
  result.amplitude = best_a1 + best_a2;
  result.converged = best.converged;
  result.model_params = {{"a1", best_a1}, {"tau1", tau1}, {"a2", best_a2}, {"tau2", tau2}};
  if (!best.converged) {
    throw FitNonConvergence("biexponential fit did not converge", result);
  }
  return result;
}

FitResult fit_deformed_exponential(const DecayTrace& trace, double coupling) {
  trace.validate();
  if (!trace.uniform()) throw ValidationError("trace: fit requires uniform bins");
  if (coupling < 0.0) throw DomainError("deformed fit: coupling must be >= 0");
  const double bg = trace.background > 0.0 ? trace.background : estimate_background(trace);
  const auto counts = adjusted_counts(trace, bg);
  const auto t = left_edges(trace);
  const double dt = trace.bin_width();
  const double t_end = trace.bin_edges.back();

  const BoundedParam tr_tau{0.25 * dt, 50.0 * t_end, true};

  const auto model_for = [&](double tau) {
    std::vector<double> m(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double x = t[i] / tau;
      m[i] = std::exp(-x - coupling * std::sqrt(x));
    }
    return convolved_basis(t, trace.irf, m);
  };

  const auto objective = [&](const std::vector<double>& x) {
    const auto m = model_for(tr_tau.value(x[0]));
    return profiled_loss(m, counts, FitLoss::LeastSquares).loss;
  };

  const double tau_hat = crude_tau_estimate(t, counts);
  NelderMeadResult best;
  for (double f : {0.5, 1.0, 3.0}) {
    const auto r = nelder_mead(objective, {tr_tau.coordinate(f * tau_hat)}, 200);
    if (r.f < best.f) best = r;
  }

  const double tau = tr_tau.value(best.x[0]);
  const auto m = model_for(tau);
  const auto ev = profiled_loss(m, counts, FitLoss::LeastSquares);

  FitResult result;
  result.n_max = 0;
  result.background = bg;
  result.residual = ev.loss;
  result.lsq_residual = ev.loss;
  result.amplitude = ev.amplitude;
  result.converged = best.converged;
  result.model_params = {{"coupling", coupling}, {"tau", tau}, {"i0", ev.amplitude}};
  if (!best.converged) {
    throw FitNonConvergence("deformed exponential fit did not converge", result);
  }
  return result;
}

ModelComparison compare_models(const DecayTrace& trace, const FitConfig& config) {
  trace.validate();
  ModelComparison cmp;

  try {
    cmp.fits["superradiant"] = fit_superradiant(trace, config);
  } catch (const FitNonConvergence& err) {
    cmp.fits["superradiant"] = err.best_so_far;
    cmp.errors["superradiant"] = err.what();
  } catch (const FitError& err) {
    cmp.errors["superradiant"] = err.what();
  }

  try {
    cmp.fits["biexponential"] = fit_biexponential(trace);
  } catch (const FitNonConvergence& err) {
    cmp.fits["biexponential"] = err.best_so_far;
    cmp.errors["biexponential"] = err.what();
  } catch (const FitError& err) {
    cmp.errors["biexponential"] = err.what();
  }

  try {
    FitResult best_deformed;
    bool have = false;
    for (double a : {0.0, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0}) {
      const auto r = fit_deformed_exponential(trace, a);
      if (!have || r.lsq_residual < best_deformed.lsq_residual) {
        best_deformed = r;
        have = true;
      }
    }
    cmp.fits["deformed"] = best_deformed;
    cmp.deformed_coupling = best_deformed.model_params.at("coupling");
  } catch (const FitError& err) {
    cmp.errors["deformed"] = err.what();
  }

  const auto sr = cmp.fits.find("superradiant");
  if (sr != cmp.fits.end() && sr->second.lsq_residual > 0.0) {
    if (auto it = cmp.fits.find("biexponential"); it != cmp.fits.end()) {
      cmp.lsq_ratio_biexponential = it->second.lsq_residual / sr->second.lsq_residual;
    }
    if (auto it = cmp.fits.find("deformed"); it != cmp.fits.end()) {
      cmp.lsq_ratio_deformed = it->second.lsq_residual / sr->second.lsq_residual;
    }
  }
  for (auto& [name, fit] : cmp.fits) {
    for (const auto& [other, of] : cmp.fits) {
      fit.per_model_scores[other] = of.lsq_residual;
    }
  }
  return cmp;
}

}  // namespace srsim
