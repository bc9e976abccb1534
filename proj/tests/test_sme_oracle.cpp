#include <doctest.h>

#include <cmath>
#include <complex>
#include <numbers>
#include <random>

#include "qkfmag/random.hpp"
#include "qkfmag/sme_oracle.hpp"

using namespace qkfmag;
using cd = std::complex<double>;

namespace {

PhysicalParams small_j(double j, double t_total) {
  return {j, 2.0 * std::numbers::pi * 1e6, 0.0, 1e5, 1.0, PriorVariance::infinite(), t_total};
}

double expect(const DensityMatrix& rho, const ComplexMatrix& op) {
  return (rho.rho * op).trace().real();
}

}  // namespace

TEST_CASE("spin-1/2 and spin-1 operators") {
  const auto half = build_spin_operators(0.5);
  CHECK(half.dim == 2);
  CHECK(half.jz(0, 0).real() == 0.5);
  CHECK(half.jz(1, 1).real() == -0.5);

  const auto one = build_spin_operators(1.0);
  CHECK(one.jz(0, 0).real() == 1.0);
  CHECK(one.jz(1, 1).real() == 0.0);
  CHECK(one.jz(2, 2).real() == -1.0);
  CHECK(std::abs(one.jx(0, 1) - cd(1.0 / std::sqrt(2.0))) < 1e-15);
  CHECK(std::abs(one.jx(1, 2) - cd(1.0 / std::sqrt(2.0))) < 1e-15);
  CHECK(std::abs(one.jx(0, 2)) == 0.0);
}

TEST_CASE("angular momentum algebra for every small j") {
  for (int twice = 0; twice <= 40; ++twice) {
    const double j = twice / 2.0;
    const auto ops = build_spin_operators(j);
    const ComplexMatrix comm = ops.jx * ops.jy - ops.jy * ops.jx;
    CHECK((comm - cd(0, 1) * ops.jz).cwiseAbs().maxCoeff() <= 1e-12);
    const ComplexMatrix casimir = ops.jx * ops.jx + ops.jy * ops.jy + ops.jz * ops.jz;
    const ComplexMatrix expected = j * (j + 1.0) * ComplexMatrix::Identity(ops.dim, ops.dim);
    CHECK((casimir - expected).cwiseAbs().maxCoeff() <= 1e-12);
    for (int i = 0; i < ops.dim; ++i) CHECK(ops.jz(i, i).real() == j - i);
  }
}

TEST_CASE("non-half-integer j is rejected") {
  CHECK_THROWS_AS(build_spin_operators(0.3), ParamError);
  CHECK_THROWS_AS(build_spin_operators(-1.0), ParamError);
  CHECK(is_half_integer(3.5));
  CHECK_FALSE(is_half_integer(3.25));
}

TEST_CASE("x-polarized coherent state") {
  const auto half = build_spin_operators(0.5);
  const auto rho_half = coherent_spin_state_x(half);
  CHECK(std::abs(rho_half.rho(0, 1).real() - 0.5) < 1e-12);
  CHECK(std::abs(rho_half.rho(0, 0).real() - 0.5) < 1e-12);
  const auto m_half = oracle_moments(rho_half, half);
  CHECK(std::abs(m_half.mean) < 1e-12);
  CHECK(std::abs(m_half.variance - 0.25) < 1e-12);

  for (double j : {1.0, 2.0, 3.5, 10.0, 20.0}) {
    const auto ops = build_spin_operators(j);
    const auto rho = coherent_spin_state_x(ops);
    const auto m = oracle_moments(rho, ops);
    CHECK(std::abs(m.mean) < 1e-10);
    CHECK(std::abs(m.variance - 0.5 * j) < 1e-10);
    CHECK(std::abs(expect(rho, ops.jx) - j) < 1e-10);
    CHECK(std::abs((rho.rho * rho.rho).trace().real() - 1.0) < 1e-10);
  }
}

TEST_CASE("jz eigenstates have sharp moments") {
  const auto ops = build_spin_operators(3.0);
  for (double m : {3.0, 0.0, -2.0}) {
    const auto mom = oracle_moments(jz_eigenstate(ops, m), ops);
    CHECK(mom.mean == m);
    CHECK(mom.variance == 0.0);
  }
  CHECK_THROWS_AS(jz_eigenstate(ops, 0.5), ParamError);
  CHECK_THROWS_AS(jz_eigenstate(ops, 4.0), ParamError);
}

TEST_CASE("no field, no measurement, no noise is the identity map") {
  const auto ops = build_spin_operators(2.0);
  const auto rho = coherent_spin_state_x(ops);
  PhysicalParams p = small_j(2.0, 1e-6);
  p.meas_strength = 0.0;
  CHECK(sme_increment(rho, ops, p, 1e-9, 0.0).cwiseAbs().maxCoeff() == 0.0);
  const auto next = sme_step(rho, ops, p, 1e-9, 0.0);
  CHECK((next.rho - rho.rho).cwiseAbs().maxCoeff() <= 1e-15);
}

TEST_CASE("the raw increment is trace-free") {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> n01;
  for (double j : {0.5, 2.0, 5.0}) {
    const auto ops = build_spin_operators(j);
    auto p = small_j(j, 1e-6);
    p.b_true = 1e-3;
    DensityMatrix rho = coherent_spin_state_x(ops);
    const double dt = sme_dt_bound(p);
    for (int i = 0; i < 200; ++i) {
      const double dw = std::sqrt(dt) * n01(rng);
      CHECK(std::abs(sme_increment(rho, ops, p, dt, dw).trace()) <= 1e-12);
      rho = sme_step(rho, ops, p, dt, dw);
    }
  }
}

TEST_CASE("field precesses the spin toward +Jz") {
  const double j = 5.0;
  auto p = small_j(j, 1e-7);
  p.b_true = 1e-3;  // omega_L t = 2 pi 1e3 * 1e-7
  p.efficiency = 1e-6;
  const auto ops = build_spin_operators(j);
  DensityMatrix rho = coherent_spin_state_x(ops);
  const auto grid = TimeGrid::uniform(p.t_total, sme_dt_bound(p));
  for (std::size_t k = 0; k < grid.n_steps(); ++k) rho = sme_step(rho, ops, p, grid.dt(k), 0.0);
  const double expected = p.gamma * p.b_true * j * 2.0 / p.meas_strength *
                          -std::expm1(-0.5 * p.meas_strength * p.t_total);
  CHECK(oracle_moments(rho, ops).mean == doctest::Approx(expected).epsilon(1e-3));
}

TEST_CASE("dephasing rates follow M (m - m')^2 / 2 for J <= 5") {
  for (double j : {0.5, 1.0, 2.0, 3.5, 5.0}) {
    const auto check = dephasing_rate_check(j, 1e5, 1e-5);
    CHECK(check.pairs_checked > 0);
    CHECK(check.max_rate_error <= 0.01);
  }
}

TEST_CASE("density-matrix invariants hold along random SME paths") {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> n01;
  for (int trial = 0; trial < 12; ++trial) {
    const double j = 0.5 * static_cast<int>(1 + 10 * u(rng));
    auto p = small_j(j, 1e-6);
    p.meas_strength = std::pow(10.0, 4.0 + 2.0 * u(rng));
    p.efficiency = 0.05 + 0.95 * u(rng);
    p.b_true = (2.0 * u(rng) - 1.0) * 1e-2;
    const auto ops = build_spin_operators(j);
    DensityMatrix rho = coherent_spin_state_x(ops);
    const double dt = sme_dt_bound(p);
    for (int i = 0; i < 400; ++i) {
      rho = sme_step(rho, ops, p, dt, std::sqrt(dt) * n01(rng));
      if (i % 20 == 0) {
        const auto d = diagnose(rho);
        REQUIRE(d.hermiticity_error <= 1e-10);
        REQUIRE(d.trace_error <= 1e-10);
        REQUIRE(d.min_eigenvalue >= -1e-8);
      }
    }
  }
}

TEST_CASE("oracle preconditions") {
  auto p = small_j(60.0, 1e-7);
  CHECK_THROWS_AS(compare_to_gaussian(p, TimeGrid::uniform(1e-7, 1e-12), SeedSpec{}), ParamError);
  p = small_j(10.0, 1e-7);
  CHECK_THROWS_AS(compare_to_gaussian(p, TimeGrid::uniform(1e-7, 1e-8), SeedSpec{}), ParamError);
  p = small_j(2.3, 1e-7);
  CHECK_THROWS_AS(compare_to_gaussian(p, TimeGrid::uniform(1e-7, 1e-12), SeedSpec{}), ParamError);
}

TEST_CASE("J = 10: SME and Gaussian model agree within the oracle thresholds") {
  const double j = 10.0;
  auto p = small_j(j, 0.1 / 1e5);
  const auto grid = TimeGrid::uniform(p.t_total, sme_dt_bound(p));
  for (std::uint64_t s = 0; s < 4; ++s) {
    const auto cmp = compare_to_gaussian(p, grid, SeedSpec{100, s});
    CHECK(cmp.series.size() == grid.size());
    CHECK(cmp.max_d_mean <= mean_deviation_threshold(j));
    CHECK(cmp.max_d_var <= variance_deviation_threshold(j));
    CHECK(cmp.min_eigenvalue >= -1e-8);
    CHECK(within_thresholds(cmp, j));
  }
}

TEST_CASE("J = 1/2: the Gaussian model breaks down") {
  auto p = small_j(0.5, 2.0 / 1e5);
  const auto grid = TimeGrid::uniform(p.t_total, sme_dt_bound(p));
  const auto cmp = compare_to_gaussian(p, grid, SeedSpec{100, 0});
  CHECK_FALSE(within_thresholds(cmp, 0.5));
}

TEST_CASE("agreement improves monotonically with J") {
  double previous = std::numeric_limits<double>::infinity();
  for (double j : {2.0, 5.0, 10.0, 20.0}) {
    auto p = small_j(j, 0.1 / 1e5);
    const auto grid = TimeGrid::uniform(p.t_total, sme_dt_bound(p));
    double score = 0.0;
    constexpr int seeds = 6;
    for (std::uint64_t s = 0; s < seeds; ++s) {
      const auto cmp = compare_to_gaussian(p, grid, SeedSpec{555, s});
      score += cmp.max_d_mean / std::sqrt(0.5 * j) + cmp.max_d_var / (0.5 * j);
    }
    score /= seeds;
    CAPTURE(j);
    CHECK(score < previous);
    previous = score;
  }
}
