#include "srsim/propagator.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "srsim/errors.hpp"

namespace srsim {

void TimeGrid::validate() const {
  if (!(t_start >= 0.0)) throw ValidationError("grid.t_start: must be >= 0");
  if (!(t_end > t_start)) throw ValidationError("grid.t_end: must be > t_start");
  if (n_points < 2) throw ValidationError("grid.n_points: must be >= 2");
  if (spacing == Spacing::Log && t_start <= 0.0) {
    throw ValidationError("grid.t_start: must be > 0 for log spacing");
  }
}

std::vector<double> TimeGrid::times() const {
  validate();
  std::vector<double> t(static_cast<std::size_t>(n_points));
  if (spacing == Spacing::Linear) {
    const double h = dt();
    for (int i = 0; i < n_points; ++i) t[static_cast<std::size_t>(i)] = t_start + i * h;
  } else {
    const double ratio = std::log(t_end / t_start) / (n_points - 1);
    for (int i = 0; i < n_points; ++i) {
      t[static_cast<std::size_t>(i)] = t_start * std::exp(ratio * i);
    }
  }
  t.back() = t_end;
  return t;
}

void IrfSpec::validate() const {
  if (shape == Shape::Gaussian) {
    if (fwhm < 0.0) throw ValidationError("irf.fwhm: must be >= 0");
  } else {
    if (kernel.empty()) throw ValidationError("irf.kernel: empty");
    double sum = 0.0;
    for (double k : kernel) {
      if (k < 0.0) throw ValidationError("irf.kernel: negative entry");
      sum += k;
    }
    if (!(sum > 0.0)) throw ValidationError("irf.kernel: zero mass");
  }
}

Eigen::VectorXd state_vector(const LadderState& state) {
  const auto dim = static_cast<Eigen::Index>(state.populations.size());
  Eigen::VectorXd v(dim + 2);
  for (Eigen::Index i = 0; i < dim; ++i) v[i] = state.populations[static_cast<std::size_t>(i)];
  v[dim] = state.n_nc;
  v[dim + 1] = state.dark;
  return v;
}

LadderState state_from_vector(const Eigen::VectorXd& v, Spin sigma) {
  LadderState s;
  s.sigma = sigma;
  const auto dim = v.size() - 2;
  s.populations.assign(static_cast<std::size_t>(dim), 0.0);
  for (Eigen::Index i = 0; i < dim; ++i) s.populations[static_cast<std::size_t>(i)] = v[i];
  s.n_nc = v[dim];
  s.dark = v[dim + 1];
  return s;
}

Eigen::VectorXd emission_functional(const LadderIndex& index, const RateParams& params) {
  const int dim = index.dimension();
  Eigen::VectorXd f = Eigen::VectorXd::Zero(dim + 2);
  for (int i = 0; i < dim; ++i) {
    const auto [two_j, two_m] = index.jm_at(i);
    f[i] = params.gamma * emission_weight(two_j, two_m);
  }
  f[dim] = params.gamma;
  return f;
}

double fluorescence(const LadderIndex& index, const LadderState& state,
                    const RateParams& params) {
  double w = state.n_nc;
  for (int i = 0; i < index.dimension(); ++i) {
    const auto [two_j, two_m] = index.jm_at(i);
    w += emission_weight(two_j, two_m) * state.populations[static_cast<std::size_t>(i)];
  }
  return params.gamma * w;
}

namespace {

constexpr double kClampFloor = -1e-12;

void check_and_clamp(Eigen::VectorXd& v, double t) {
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const double x = v[i];
    if (!std::isfinite(x)) {
      std::ostringstream os;
      os << "propagation produced non-finite value at t=" << t << ", component " << i;
      throw NumericalError(os.str());
    }
    if (x < 0.0) {
      if (x < kClampFloor) {
        std::ostringstream os;
        os << "propagation produced negative population " << x << " at t=" << t
           << ", component " << i;
        throw NumericalError(os.str());
      }
      v[i] = 0.0;
    }
  }
}

// One SDIRK2 step (alpha = 1 - sqrt(2)/2, L-stable, stiffly accurate).
// The generator is lower triangular in our index layout, so the implicit
// solves are exact sparse forward substitutions.
class Sdirk2 {
 public:
  explicit Sdirk2(const Eigen::SparseMatrix<double>& a) : a_(a) {}

  Eigen::VectorXd step(const Eigen::VectorXd& v, double h) {
    prepare(h);
    const Eigen::VectorXd z1 = solve(v);
    const Eigen::VectorXd z2 = solve(v + (1.0 - kAlpha) * h * (a_ * z1));
    return z2;
  }

  // Adaptive integration from t0 to t1 with step-doubling error control.
  Eigen::VectorXd integrate(Eigen::VectorXd v, double t0, double t1, double rtol,
                            double atol) {
    double t = t0;
    double h = (t1 - t0) / 8.0;
    int rejections = 0;
    while (t < t1) {
      h = std::min(h, t1 - t);
      const Eigen::VectorXd coarse = step(v, h);
      const Eigen::VectorXd mid = step(v, 0.5 * h);
      const Eigen::VectorXd fine = step(mid, 0.5 * h);
      const double scale = atol + rtol * fine.cwiseAbs().maxCoeff();
      const double err = (coarse - fine).cwiseAbs().maxCoeff() / (3.0 * scale);
      if (err <= 1.0 || h <= (t1 - t0) * 1e-12) {
        v = fine;
        t += h;
        rejections = 0;
      } else if (++rejections > 60) {
        throw NumericalError("sdirk2: step control failed to converge");
      }
      const double grow = 0.9 * std::pow(std::max(err, 1e-12), -1.0 / 3.0);
      h *= std::clamp(grow, 0.2, 4.0);
    }
    return v;
  }

 private:
  static constexpr double kAlpha = 0.29289321881345254;  // 1 - sqrt(2)/2

  void prepare(double h) {
    if (h == cached_h_) return;
    Eigen::SparseMatrix<double> m = -(kAlpha * h) * a_;
    for (int i = 0; i < m.rows(); ++i) m.coeffRef(i, i) += 1.0;
    m.makeCompressed();
    lhs_ = m;
    cached_h_ = h;
  }

  Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const {
    Eigen::VectorXd x = rhs;
    lhs_.triangularView<Eigen::Lower>().solveInPlace(x);
    return x;
  }

  const Eigen::SparseMatrix<double>& a_;
  Eigen::SparseMatrix<double> lhs_;
  double cached_h_ = -1.0;
};

Eigen::MatrixXd dense_step_operator(const Eigen::SparseMatrix<double>& generator, double dt) {
  Eigen::MatrixXd a = Eigen::MatrixXd(generator) * dt;
  return a.exp();
}

}  // namespace

std::vector<LadderState> evolve(const Eigen::SparseMatrix<double>& generator,
                                const LadderState& v0, const TimeGrid& grid) {
  grid.validate();
  const Eigen::Index dim = generator.rows();
  Eigen::VectorXd v = state_vector(v0);
  if (v.size() != dim) {
    throw DomainError("evolve: state and generator dimensions differ");
  }

  const auto times = grid.times();
  std::vector<LadderState> out;
  out.reserve(times.size());

  if (grid.uniform() && dim <= kDenseDimensionLimit) {
    const Eigen::MatrixXd e = dense_step_operator(generator, grid.dt());
    if (grid.t_start > 0.0) {
      v = (dense_step_operator(generator, grid.t_start) * v).eval();
    }
    for (std::size_t k = 0; k < times.size(); ++k) {
      if (k > 0) v = (e * v).eval();
      Eigen::VectorXd w = v;
      check_and_clamp(w, times[k]);
      out.push_back(state_from_vector(w, v0.sigma));
    }
    return out;
  }

  Sdirk2 integrator(generator);
  double t = 0.0;
  for (double target : times) {
    if (target > t) {
      v = integrator.integrate(v, t, target, 1e-10, 1e-16);
      t = target;
    }
    Eigen::VectorXd w = v;
    check_and_clamp(w, target);
    out.push_back(state_from_vector(w, v0.sigma));
  }
  return out;
}

Eigen::MatrixXd functional_series(const Eigen::SparseMatrix<double>& generator,
                                  double dt, int n_steps, const Eigen::VectorXd& f,
                                  const std::vector<Eigen::VectorXd>& initial_states) {
  if (n_steps < 0) throw DomainError("functional_series: n_steps must be >= 0");
  if (!(dt > 0.0)) throw DomainError("functional_series: dt must be > 0");
  const Eigen::Index dim = generator.rows();
  Eigen::MatrixXd out(n_steps + 1, static_cast<Eigen::Index>(initial_states.size()));

  if (dim <= kDenseDimensionLimit) {
    const Eigen::MatrixXd e = dense_step_operator(generator, dt);
    Eigen::RowVectorXd row = f.transpose();
    for (int k = 0; k <= n_steps; ++k) {
      for (std::size_t i = 0; i < initial_states.size(); ++i) {
        out(k, static_cast<Eigen::Index>(i)) = row.dot(initial_states[i]);
      }
      if (k < n_steps) row = (row * e).eval();
    }
  } else {
    // Large systems: integrate each initial state with the sparse stepper.
    for (std::size_t i = 0; i < initial_states.size(); ++i) {
      Sdirk2 integrator(generator);
      Eigen::VectorXd v = initial_states[i];
      out(0, static_cast<Eigen::Index>(i)) = f.dot(v);
      for (int k = 1; k <= n_steps; ++k) {
        v = integrator.integrate(v, (k - 1) * dt, k * dt, 1e-10, 1e-16);
        out(k, static_cast<Eigen::Index>(i)) = f.dot(v);
      }
    }
  }
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    for (Eigen::Index c = 0; c < out.cols(); ++c) {
      if (!std::isfinite(out(r, c))) {
        throw NumericalError("functional_series: non-finite fluorescence value");
      }
      if (out(r, c) < 0.0) out(r, c) = 0.0;
    }
  }
  return out;
}

double peak_fluorescence(int n_spins, const RateParams& params) {
  params.validate();
  if (params.gamma_d_0 != 0.0 || params.gamma_d_1 != 0.0 || params.gamma_isc_0 != 0.0 ||
      params.gamma_isc_1 != 0.0) {
    throw DomainError("peak_fluorescence: requires gamma_d = gamma_isc = 0");
  }
  const LadderIndex index = build_index(n_spins);
  const auto gen = build_rate_matrix(index, params, Spin::ms0);
  const LadderState v0 = initial_state(index, {.kind = InitialStateSpec::Kind::AllUp});

  // The burst peaks near ln(N)/(N gamma); cover it with margin.
  const double t_end =
      (4.0 + 3.0 * std::log(std::max(2, n_spins))) / (n_spins * params.gamma);
  const int n = 8001;
  const double h = t_end / (n - 1);
  const Eigen::VectorXd f = emission_functional(index, params);
  const Eigen::MatrixXd series =
      functional_series(gen, h, n - 1, f, {state_vector(v0)});

  int k_max = 0;
  for (int k = 0; k < n; ++k) {
    if (series(k, 0) > series(k_max, 0)) k_max = k;
  }
  if (k_max == 0 || k_max == n - 1) return series(k_max, 0);
  // Parabolic refinement through the three samples around the maximum.
  const double y0 = series(k_max - 1, 0), y1 = series(k_max, 0), y2 = series(k_max + 1, 0);
  const double denom = y0 - 2.0 * y1 + y2;
  if (denom >= 0.0) return y1;
  const double delta = 0.5 * (y0 - y2) / denom;
  return y1 - 0.25 * (y0 - y2) * delta;
}

std::vector<double> irf_kernel(const IrfSpec& irf, double bin_width) {
  irf.validate();
  if (!(bin_width > 0.0)) throw ValidationError("irf: bin width must be > 0");

  std::vector<double> kernel;
  if (irf.shape == IrfSpec::Shape::Measured) {
    kernel = irf.kernel;
  } else {
    if (irf.fwhm == 0.0) return {1.0};
    const double sigma = irf.fwhm / (2.0 * std::sqrt(2.0 * std::log(2.0)));
    const int half = std::max(1, static_cast<int>(std::ceil(6.0 * sigma / bin_width)));
    kernel.resize(static_cast<std::size_t>(2 * half + 1));
    // Bin-integrated Gaussian so narrow kernels keep unit mass.
    const double inv = 1.0 / (std::sqrt(2.0) * sigma);
    for (int q = -half; q <= half; ++q) {
      const double lo = (q - 0.5) * bin_width * inv;
      const double hi = (q + 0.5) * bin_width * inv;
      kernel[static_cast<std::size_t>(q + half)] = 0.5 * (std::erf(hi) - std::erf(lo));
    }
  }
  double sum = 0.0;
  for (double k : kernel) sum += k;
  for (double& k : kernel) k /= sum;
  return kernel;
}

FluorescenceTrace convolve_irf(const FluorescenceTrace& trace, const IrfSpec& irf) {
  const std::size_t n = trace.times.size();
  if (n != trace.rates.size()) throw ValidationError("trace: times/rates length mismatch");
  if (n < 2) throw ValidationError("trace: needs at least 2 samples");
  const double h = trace.times[1] - trace.times[0];
  for (std::size_t i = 1; i + 1 < n; ++i) {
    const double d = trace.times[i + 1] - trace.times[i];
    if (std::abs(d - h) > 1e-9 * std::max(std::abs(h), std::abs(d))) {
      throw ValidationError("convolve_irf: non-uniform time grid");
    }
  }

  const std::vector<double> kernel = irf_kernel(irf, h);
  const int len = static_cast<int>(kernel.size());
  // Gaussian kernels are centered; measured kernels start at zero lag.
  const int center = irf.shape == IrfSpec::Shape::Gaussian ? len / 2 : 0;

  FluorescenceTrace out;
  out.times = trace.times;
  out.provenance = trace.provenance;
  out.rates.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (int q = 0; q < len; ++q) {
      const auto j = static_cast<long long>(i) - (q - center);
      if (j >= 0 && j < static_cast<long long>(n)) {
        acc += kernel[static_cast<std::size_t>(q)] * trace.rates[static_cast<std::size_t>(j)];
      }
    }
    out.rates[i] = acc;
  }
  return out;
}

}  // namespace srsim
