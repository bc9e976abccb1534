#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "oracles.hpp"
#include "qkfmag/estimators.hpp"

using namespace qkfmag;

namespace {

PhysicalParams fig2(PriorVariance prior) {
  return {4e6, 2.0 * std::numbers::pi * 1e6, 1e-6, 1e5, 1.0, prior, 2e-3};
}

std::vector<double> log_times(double from, double to, int per_decade) {
  std::vector<double> out;
  const int n = static_cast<int>(std::round(std::log10(to / from) * per_decade));
  for (int i = 0; i <= n; ++i) out.push_back(from * std::pow(10.0, double(i) / per_decade));
  return out;
}

}  // namespace

TEST_CASE("numerical Riccati flow, infinite prior, against the closed form") {
  const auto p = fig2(PriorVariance::infinite());
  const auto times = log_times(1e-8, 2e-3, 8);
  const auto sol = riccati_integrate(p, times);
  REQUIRE(sol.v.size() == times.size());
  for (std::size_t i = 0; i < times.size(); ++i) {
    CAPTURE(times[i]);
    CHECK(std::sqrt(sol.v[i](1, 1)) == doctest::Approx(riccati_analytic(p, times[i])).epsilon(1e-6));
  }
}

TEST_CASE("numerical Riccati flow, finite prior, against the information oracle") {
  for (double prior : {1e-14, 1e-10, 1e-8, 1e-4}) {
    const auto p = fig2(PriorVariance::of(prior));
    const auto times = log_times(1e-9, 2e-3, 6);
    const auto sol = riccati_integrate(p, times);
    for (std::size_t i = 0; i < times.size(); ++i) {
      CAPTURE(prior);
      CAPTURE(times[i]);
      CHECK(sol.v[i](1, 1) == doctest::Approx(oracle::field_variance(p, times[i])).epsilon(1e-7));
    }
  }
}

TEST_CASE("numerical Riccati flow over random parameters") {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    PhysicalParams p = fig2(PriorVariance::of(std::pow(10.0, -14.0 + 8.0 * u(rng))));
    p.j_total = std::pow(10.0, 1.0 + 6.0 * u(rng));
    p.meas_strength = std::pow(10.0, 2.0 + 4.0 * u(rng));
    p.efficiency = 0.05 + 0.95 * u(rng);
    p.t_total = 3.0 / p.meas_strength;
    const std::vector<double> times{0.01 / p.meas_strength, 0.3 / p.meas_strength,
                                    3.0 / p.meas_strength};
    const auto sol = riccati_integrate(p, times);
    for (std::size_t i = 0; i < times.size(); ++i) {
      CAPTURE(trial);
      CHECK(sol.v[i](1, 1) == doctest::Approx(oracle::field_variance(p, times[i])).epsilon(1e-6));
      // rank one: the Jz error is a deterministic multiple of the field error
      const auto& v = sol.v[i];
      CHECK(std::abs(v(0, 0) * v(1, 1) - v(0, 1) * v(0, 1)) <=
            1e-6 * v(0, 0) * v(1, 1) + 1e-300);
    }
  }
}

TEST_CASE("Riccati solution does not depend on the true field") {
  auto p = fig2(PriorVariance::of(1e-10));
  const std::vector<double> times{1e-6, 1e-4, 1e-3};
  const auto a = riccati_integrate(p, times);
  p.b_true = -3e-4;
  const auto b = riccati_integrate(p, times);
  for (std::size_t i = 0; i < times.size(); ++i) CHECK(a.v[i] == b.v[i]);
}

TEST_CASE("zero prior keeps the field variance at zero") {
  const auto p = fig2(PriorVariance::of(0.0));
  const std::vector<double> times{0.0, 1e-6, 1e-3};
  const auto sol = riccati_integrate(p, times);
  for (const auto& v : sol.v) {
    CHECK(v(1, 1) == 0.0);
    CHECK(v(0, 1) == 0.0);
  }
}

TEST_CASE("a finite prior only ever helps") {
  const auto inf = fig2(PriorVariance::infinite());
  const auto fin = fig2(PriorVariance::of(1e-10));
  const auto times = log_times(1e-8, 2e-3, 5);
  const auto a = riccati_integrate(inf, times);
  const auto b = riccati_integrate(fin, times);
  for (std::size_t i = 0; i < times.size(); ++i) CHECK(b.v[i](1, 1) <= a.v[i](1, 1));
  // early on the prior dominates
  CHECK(b.v[0](1, 1) == doctest::Approx(1e-10).epsilon(1e-3));
  CHECK(a.v[0](1, 1) > 100.0 * b.v[0](1, 1));
}

TEST_CASE("Riccati argument checks") {
  const auto p = fig2(PriorVariance::infinite());
  const std::vector<double> unsorted{1e-3, 1e-4};
  CHECK_THROWS_AS(riccati_integrate(p, unsorted), ParamError);
  const std::vector<double> negative{-1e-6};
  CHECK_THROWS_AS(riccati_integrate(p, negative), ParamError);
}
