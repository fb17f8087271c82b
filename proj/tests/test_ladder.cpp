#include <doctest.h>

#include <Eigen/SparseCore>
#include <set>

#include "srsim/errors.hpp"
#include "srsim/ladder.hpp"
#include "srsim/units.hpp"

using namespace srsim;

TEST_SUITE_BEGIN("ladder");

TEST_CASE("index dimension matches (N^2+3N)/2") {
  CHECK(build_index(1).dimension() == 2);
  CHECK(build_index(2).dimension() == 5);  // J=1/2 (2 states) + J=1 (3 states)
  CHECK(build_index(50).dimension() == 1325);
  CHECK(build_index(70).dimension() == 2555);
}

TEST_CASE("index rejects out-of-range N") {
  CHECK_THROWS_AS(build_index(0), DomainError);
  CHECK_THROWS_AS(build_index(-3), DomainError);
  CHECK_THROWS_AS(build_index(LadderIndex::kMaxSpins + 1), DomainError);
}

TEST_CASE("index is a bijection over valid (J, M)") {
  for (int n : {1, 2, 3, 7, 20}) {
    const LadderIndex index = build_index(n);
    std::set<int> seen;
    int count = 0;
    for (int two_j = 1; two_j <= n; ++two_j) {
      for (int two_m = -two_j; two_m <= two_j; two_m += 2) {
        const int idx = index.index_of(two_j, two_m);
        CHECK(idx >= 0);
        CHECK(idx < index.dimension());
        CHECK(seen.insert(idx).second);
        const auto [tj, tm] = index.jm_at(idx);
        CHECK(tj == two_j);
        CHECK(tm == two_m);
        ++count;
      }
    }
    CHECK(count == index.dimension());
  }
}

TEST_CASE("index rejects invalid (J, M)") {
  const LadderIndex index = build_index(4);
  CHECK_THROWS_AS(index.index_of(2, 4), DomainError);   // |M| > J
  CHECK_THROWS_AS(index.index_of(5, 1), DomainError);   // J beyond N/2
  CHECK_THROWS_AS(index.index_of(2, 1), DomainError);   // parity mismatch
}

TEST_CASE("collective rate gamma (J(J+1) - M(M-1))") {
  const double g = 2.0;
  CHECK(collective_rate(1, 1, g) == doctest::Approx(g));        // J=1/2, M=1/2
  CHECK(collective_rate(2, -2, g) == doctest::Approx(0.0));     // bottom of ladder
  CHECK(collective_rate(50, 0, g) == doctest::Approx(650.0 * g));  // J=25, M=0
  CHECK_THROWS_AS(collective_rate(1, 3, g), DomainError);
}

TEST_CASE("bottom of every ladder is absorbing") {
  for (int two_j = 1; two_j <= 40; ++two_j) {
    CHECK(collective_rate(two_j, -two_j, 5.0) == 0.0);
  }
}

TEST_CASE("initial states") {
  SUBCASE("maximally mixed top ladder puts 1/(N+1) on each M") {
    const LadderIndex index = build_index(2);
    const auto s = initial_state(index, {.kind = InitialStateSpec::Kind::MaximallyMixedTopLadder});
    for (int two_m : {-2, 0, 2}) {
      CHECK(s.populations[static_cast<std::size_t>(index.index_of(2, two_m))] ==
            doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    }
    CHECK(s.total_population() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(s.n_nc == 0.0);
  }
  SUBCASE("all up is a single population") {
    const LadderIndex index = build_index(1);
    const auto s = initial_state(index, {.kind = InitialStateSpec::Kind::AllUp});
    CHECK(s.populations[static_cast<std::size_t>(index.index_of(1, 1))] == 1.0);
    CHECK(s.total_population() == 1.0);
  }
  SUBCASE("custom weights ordered from M = -J") {
    const LadderIndex index = build_index(3);
    InitialStateSpec spec{.kind = InitialStateSpec::Kind::Custom,
                          .custom_weights = std::vector<double>{0.0, 0.0, 0.0, 1.0}};
    const auto s = initial_state(index, spec);
    CHECK(s.populations[static_cast<std::size_t>(index.index_of(3, 3))] == 1.0);
  }
  SUBCASE("custom weight validation") {
    const LadderIndex index = build_index(2);
    InitialStateSpec spec{.kind = InitialStateSpec::Kind::Custom,
                          .custom_weights = std::vector<double>{0.5, 0.5}};
    CHECK_THROWS_AS(initial_state(index, spec), ValidationError);  // wrong length
    spec.custom_weights = std::vector<double>{0.3, 0.3, 0.3};
    CHECK_THROWS_AS(initial_state(index, spec), ValidationError);  // not normalized
    spec.custom_weights = std::vector<double>{-0.5, 0.5, 1.0};
    CHECK_THROWS_AS(initial_state(index, spec), ValidationError);  // negative
  }
}

namespace {

RateParams test_params(double gd_mhz, double gisc_mhz) {
  RateParams p;
  p.gamma = units::rate_from_mhz(10.0);
  p.gamma_d_0 = units::rate_from_mhz(gd_mhz);
  p.gamma_d_1 = units::rate_from_mhz(2.0 * gd_mhz);
  p.gamma_isc_0 = units::rate_from_mhz(gisc_mhz);
  p.gamma_isc_1 = units::rate_from_mhz(3.0 * gisc_mhz);
  return p;
}

}  // namespace

TEST_CASE("single-spin generator is the two-level decay matrix") {
  const LadderIndex index = build_index(1);
  RateParams p;
  p.gamma = 3.0e7;
  const Eigen::MatrixXd a = Eigen::MatrixXd(build_rate_matrix(index, p, Spin::ms0));
  const int up = index.index_of(1, 1);
  const int dn = index.index_of(1, -1);
  CHECK(a(dn, up) == doctest::Approx(p.gamma));
  CHECK(a(up, up) == doctest::Approx(-p.gamma));
  CHECK(a(dn, dn) == 0.0);
  // n_nc decays at gamma + gamma_isc even with no ladder feed.
  CHECK(a(2, 2) == doctest::Approx(-p.gamma));
}

TEST_CASE("two-spin cascade flows at 2 gamma through M = 0") {
  const LadderIndex index = build_index(2);
  RateParams p;
  p.gamma = 1.0e7;
  const Eigen::MatrixXd a = Eigen::MatrixXd(build_rate_matrix(index, p, Spin::ms0));
  const int top = index.index_of(2, 2);
  const int mid = index.index_of(2, 0);
  const int bot = index.index_of(2, -2);
  CHECK(a(mid, top) == doctest::Approx(2.0 * p.gamma));
  CHECK(a(bot, mid) == doctest::Approx(2.0 * p.gamma));
  CHECK(a(top, top) == doctest::Approx(-2.0 * p.gamma));
  // J = 1/2 block unreachable under pure collective decay.
  const int half_up = index.index_of(1, 1);
  CHECK(a(half_up, top) == 0.0);
  CHECK(a(half_up, mid) == 0.0);
}

TEST_CASE("generator is a lower-triangular Markov generator") {
  const LadderIndex index = build_index(9);
  const auto a = build_rate_matrix(index, test_params(120.0, 8.0), Spin::ms1);
  for (int col = 0; col < a.outerSize(); ++col) {
    for (Eigen::SparseMatrix<double>::InnerIterator it(a, col); it; ++it) {
      if (it.row() == it.col()) {
        CHECK(it.value() <= 0.0);
      } else {
        CHECK(it.row() > it.col());  // triangular: flows only move down the index
        CHECK(it.value() >= 0.0);
      }
    }
  }
}

TEST_CASE("probability leaves columns only through the n_nc double-count") {
  // Column sums excluding the n_nc row must vanish: collective decay stays in
  // its ladder, dephasing and ISC transfers land one ladder down (or in the
  // dark sink from J = 1/2).
  for (int n : {1, 2, 5, 12}) {
    const LadderIndex index = build_index(n);
    const Eigen::MatrixXd a =
        Eigen::MatrixXd(build_rate_matrix(index, test_params(77.0, 5.5), Spin::ms0));
    const int row_nc = index.dimension();
    for (int col = 0; col < index.dimension(); ++col) {
      double sum = 0.0;
      for (int row = 0; row < a.rows(); ++row) {
        if (row != row_nc) sum += a(row, col);
      }
      CHECK(std::abs(sum) < 1e-9 * std::abs(a(col, col)) + 1e-30);
    }
  }
}

TEST_CASE("dephasing-only and ISC-only parts conserve ladder probability") {
  const LadderIndex index = build_index(6);
  RateParams base;
  base.gamma = 1.0;  // fixed small gamma so parts can be isolated by subtraction
  const Eigen::MatrixXd a0 = Eigen::MatrixXd(build_rate_matrix(index, base, Spin::ms0));

  RateParams with_deph = base;
  with_deph.gamma_d_0 = units::rate_from_mhz(33.0);
  const Eigen::MatrixXd deph =
      Eigen::MatrixXd(build_rate_matrix(index, with_deph, Spin::ms0)) - a0;

  RateParams with_isc = base;
  with_isc.gamma_isc_0 = units::rate_from_mhz(4.0);
  const Eigen::MatrixXd isc =
      Eigen::MatrixXd(build_rate_matrix(index, with_isc, Spin::ms0)) - a0;

  const int dim = index.dimension();
  for (int col = 0; col < dim; ++col) {
    // Dephasing: ladder block alone sums to zero (the n_nc row counts spins,
    // not probability).
    double deph_sum = 0.0;
    for (int row = 0; row < dim; ++row) deph_sum += deph(row, col);
    CHECK(std::abs(deph_sum) < 1e-6);
    // ISC: ladder block plus dark sink sums to zero.
    double isc_sum = 0.0;
    for (int row = 0; row < dim; ++row) isc_sum += isc(row, col);
    isc_sum += isc(dim + 1, col);
    CHECK(std::abs(isc_sum) < 1e-6);
  }
  // Collective part: each ladder conserves itself.
  for (int col = 0; col < dim; ++col) {
    double col_sum = 0.0;
    for (int row = 0; row < dim; ++row) col_sum += a0(row, col);
    CHECK(std::abs(col_sum) < 1e-12);
  }
}

TEST_CASE("dephasing outflux") {
  const LadderIndex index = build_index(2);
  RateParams p;
  p.gamma = 1.0e7;
  p.gamma_d_0 = units::rate_from_mhz(25.0);

  LadderState s;
  s.populations.assign(static_cast<std::size_t>(index.dimension()), 0.0);
  s.sigma = Spin::ms0;

  SUBCASE("edge states do not dephase out") {
    s.populations[static_cast<std::size_t>(index.index_of(2, 2))] = 0.5;
    s.populations[static_cast<std::size_t>(index.index_of(2, -2))] = 0.5;
    CHECK(dephasing_outflux(index, s, p) == 0.0);
  }
  SUBCASE("M = 0 of J = 1 ejects at 2 gamma_d") {
    s.populations[static_cast<std::size_t>(index.index_of(2, 0))] = 1.0;
    CHECK(dephasing_outflux(index, s, p) == doctest::Approx(2.0 * p.gamma_d_0));
  }
  SUBCASE("zero rate means zero flux") {
    p.gamma_d_0 = 0.0;
    s.populations.assign(static_cast<std::size_t>(index.dimension()), 0.2);
    CHECK(dephasing_outflux(index, s, p) == 0.0);
  }
}

TEST_CASE("rate params validation") {
  RateParams p;
  CHECK_THROWS_AS(p.validate(), ValidationError);  // gamma must be > 0
  p.gamma = 1.0;
  p.gamma_d_1 = -2.0;
  CHECK_THROWS_AS(p.validate(), ValidationError);
  p.gamma_d_1 = 0.0;
  CHECK_NOTHROW(p.validate());
  const RateParams bulk = bulk_nv_rates();
  CHECK(units::mhz_from_rate(bulk.gamma) == doctest::Approx(12.2));
  CHECK(units::mhz_from_rate(bulk.gamma_isc_0) == doctest::Approx(1.8));
  CHECK(units::mhz_from_rate(bulk.gamma_isc_1) == doctest::Approx(9.4));
}

TEST_SUITE_END();
