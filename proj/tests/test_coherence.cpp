#include <doctest.h>

#include <cmath>

#include "dicke_oracle.hpp"
#include "srsim/coherence.hpp"
#include "srsim/errors.hpp"
#include "srsim/units.hpp"

using namespace srsim;

TEST_SUITE_BEGIN("coherence");

TEST_CASE("closed forms at zero delay") {
  CHECK(g2_zero_allup(1) == 0.0);
  CHECK(g2_zero_allup(2) == doctest::Approx(1.0));
  CHECK(g2_zero_allup(1000000) == doctest::Approx(2.0).epsilon(1e-5));
  CHECK(g2_zero_mixed(1) == 0.0);
  CHECK(g2_zero_mixed(2) == doctest::Approx(0.75));
  CHECK(g2_zero_mixed(1000000) == doctest::Approx(1.2).epsilon(1e-5));
  CHECK_THROWS_AS(g2_zero_allup(0), DomainError);
  CHECK_THROWS_AS(g2_zero_mixed(0), DomainError);
}

TEST_CASE("state-based g2 reproduces both closed forms to 1e-12") {
  for (int n = 1; n <= 60; ++n) {
    const LadderIndex index = build_index(n);
    const auto up = initial_state(index, {.kind = InitialStateSpec::Kind::AllUp});
    const auto mixed =
        initial_state(index, {.kind = InitialStateSpec::Kind::MaximallyMixedTopLadder});
    CHECK(std::abs(g2_zero_from_state(index, up) - g2_zero_allup(n)) < 1e-12);
    CHECK(std::abs(g2_zero_from_state(index, mixed) - g2_zero_mixed(n)) < 1e-12);
  }
}

TEST_CASE("mixed-state g2 is strictly increasing in N and bounded by 1.2") {
  for (int n = 1; n < 200; ++n) {
    CHECK(g2_zero_mixed(n + 1) > g2_zero_mixed(n));
    CHECK(g2_zero_mixed(n) < 1.2);
  }
}

TEST_CASE("ensemble-weighted g2") {
  SUBCASE("all weight on single emitters") {
    DomainEnsemble e;
    e.weights0[1] = 1.0;
    CHECK(g2_zero_ensemble(e) == 0.0);
  }
  SUBCASE("two-point mixture is the weighted sum") {
    DomainEnsemble e;
    e.weights0[1] = 0.9;
    e.weights0[10] = 0.1;
    CHECK(g2_zero_ensemble(e) == doctest::Approx(0.1 * g2_zero_mixed(10)).epsilon(1e-12));
  }
  SUBCASE("gaussian(50, 25) weights, frozen against an independent sum") {
    GaussianDomainSpec spec{.mean = 50.0, .variance = 25.0, .max_size = 80};
    const auto e = ensemble_from_gaussian(spec, spec, 0.5);
    // Independent evaluation: explicit truncated-Gaussian weights times the
    // closed form.
    double norm = 0.0, acc = 0.0;
    for (int n = 1; n <= 80; ++n) {
      const double w = std::exp(-(n - 50.0) * (n - 50.0) / 50.0);
      norm += w;
      acc += w * (6.0 * (n - 1.0) * (n + 3.0)) / (5.0 * n * (n + 2.0));
    }
    const double expected = acc / norm;
    CHECK(g2_zero_ensemble(e) == doctest::Approx(expected).epsilon(1e-9));
    CHECK(expected == doctest::Approx(1.1977).epsilon(1e-3));
    CHECK(expected > 1.1);
    CHECK(expected < 1.2);
  }
}

TEST_CASE("state-based g2 edge cases") {
  const LadderIndex index = build_index(1);
  LadderState excited;
  excited.populations = {1.0, 0.0};  // index 0 is (J=1/2, M=1/2)
  CHECK(g2_zero_from_state(index, excited) == 0.0);
  LadderState ground;
  ground.populations = {0.0, 1.0};
  CHECK_THROWS_AS(g2_zero_from_state(index, ground), DomainError);
}

namespace {

RateParams plain_gamma(double mhz) {
  RateParams p;
  p.gamma = units::rate_from_mhz(mhz);
  return p;
}

}  // namespace

TEST_CASE("pulsed single emitter never produces a second photon") {
  const LadderIndex index = build_index(1);
  const auto state = initial_state(index, {.kind = InitialStateSpec::Kind::AllUp});
  const auto p = plain_gamma(12.0);
  const auto curve =
      g2_delayed(index, state, p, {.t_start = 0.0, .t_end = 3.0 / p.gamma, .n_points = 31});
  for (double v : curve.values) CHECK(v == doctest::Approx(0.0));
}

TEST_CASE("delayed g2 at t = 0 equals the state-based value") {
  RateParams p;
  p.gamma = units::rate_from_mhz(7.9);
  p.gamma_isc_0 = units::rate_from_mhz(1.8);
  p.gamma_d_0 = units::rate_from_mhz(20.0);
  const LadderIndex index = build_index(12);
  const auto state = initial_state(index, {.kind = InitialStateSpec::Kind::MaximallyMixedTopLadder});
  const auto curve =
      g2_delayed(index, state, p, {.t_start = 0.0, .t_end = 5e-9, .n_points = 21});
  CHECK(curve.values.front() ==
        doctest::Approx(g2_zero_from_state(index, state)).epsilon(1e-9));
}

TEST_CASE("delayed g2 matches the exact regression oracle for N <= 4") {
  const auto p = plain_gamma(10.0);
  for (int n : {2, 3, 4}) {
    const LadderIndex index = build_index(n);
    for (auto kind : {InitialStateSpec::Kind::AllUp,
                      InitialStateSpec::Kind::MaximallyMixedTopLadder}) {
      const auto state = initial_state(index, {.kind = kind});
      TimeGrid delays{.t_start = 0.0, .t_end = 2.0 / p.gamma, .n_points = 17};
      const auto curve = g2_delayed(index, state, p, delays);

      std::vector<double> weights(static_cast<std::size_t>(n) + 1, 0.0);
      if (kind == InitialStateSpec::Kind::AllUp) {
        weights.back() = 1.0;
      } else {
        std::fill(weights.begin(), weights.end(), 1.0 / (n + 1));
      }
      const auto rho0 = oracle::top_ladder_density(n, weights, 2);
      const auto exact =
          oracle::regression_g2(n, 2, {.gamma = p.gamma}, rho0, delays.times());
      for (std::size_t k = 0; k < exact.size(); ++k) {
        CHECK(curve.values[k] == doctest::Approx(exact[k]).epsilon(1e-6));
      }
    }
  }
}

TEST_CASE("time-integrated g2") {
  RateParams p;
  p.gamma = units::rate_from_mhz(10.0);

  SUBCASE("converges to g2(0) as the window shrinks") {
    const LadderIndex index = build_index(8);
    const auto state =
        initial_state(index, {.kind = InitialStateSpec::Kind::MaximallyMixedTopLadder});
    const double tiny = 1e-4 / p.gamma;
    const auto curve = g2_time_integrated(index, state, p, {tiny}, 1.0 / p.gamma);
    CHECK(curve.values.front() ==
          doctest::Approx(g2_zero_from_state(index, state)).epsilon(1e-3));
  }
  SUBCASE("approaches 1 over the full decay of a large mixed ensemble") {
    const int n = 20;
    const LadderIndex index = build_index(n);
    const auto state =
        initial_state(index, {.kind = InitialStateSpec::Kind::MaximallyMixedTopLadder});
    const double window = 25.0 / p.gamma;
    const auto curve = g2_time_integrated(index, state, p, {window});
    // Exact asymptote from the photon-count ratio: conditioning on one
    // emission, the remaining photon number over the mean photon number.
    double ew = 0, ewn = 0, en = 0;
    for (int k = 0; k <= n; ++k) {
      const int two_m = -n + 2 * k;
      const double w = emission_weight(n, two_m);
      const double excit = 0.5 * (n + two_m);
      ew += w / (n + 1);
      ewn += w * (excit - 1.0) / (n + 1);
      en += excit / (n + 1);
    }
    const double asymptote = ewn / (ew * en);
    CHECK(curve.values.front() == doctest::Approx(asymptote).epsilon(0.01));
    CHECK(std::abs(curve.values.front() - 1.0) < 0.15);
  }
  SUBCASE("single emitter stays antibunched") {
    const LadderIndex index = build_index(1);
    const auto state = initial_state(index, {.kind = InitialStateSpec::Kind::AllUp});
    const auto curve = g2_time_integrated(index, state, p, {0.5 / p.gamma});
    CHECK(curve.values.front() < 1.0);
  }
  SUBCASE("tau validation") {
    const LadderIndex index = build_index(2);
    const auto state = initial_state(index, {.kind = InitialStateSpec::Kind::AllUp});
    CHECK_THROWS_AS(g2_time_integrated(index, state, p, {-1e-9}), DomainError);
    CHECK_THROWS_AS(g2_time_integrated(index, state, p, {2e-9}, 1e-9), DomainError);
    CHECK_THROWS_AS(g2_time_integrated(index, state, p, {}), DomainError);
  }
}

TEST_SUITE_END();
