#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "oracles.hpp"
#include "qkfmag/estimators.hpp"
#include "qkfmag/log.hpp"

using namespace qkfmag;

namespace {

PhysicalParams fig2(PriorVariance prior = PriorVariance::of(1e-10)) {
  return {4e6, 2.0 * std::numbers::pi * 1e6, 1e-6, 1e5, 1.0, prior, 2e-3};
}

PhysicalParams random_params(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  PhysicalParams p;
  p.j_total = std::pow(10.0, 2.0 + 5.0 * u(rng));
  p.gamma = 2.0 * std::numbers::pi * 1e6 * (0.1 + u(rng));
  p.meas_strength = std::pow(10.0, 3.0 + 3.0 * u(rng));
  p.efficiency = 0.05 + 0.95 * u(rng);
  p.t_total = (0.1 + 2.0 * u(rng)) / p.meas_strength;
  p.b_true = (2.0 * u(rng) - 1.0) * 0.05 / (p.gamma * p.t_total);
  p.prior_b_variance = u(rng) < 0.5 ? PriorVariance::infinite()
                                    : PriorVariance::of(std::pow(10.0, -14.0 + 6.0 * u(rng)));
  return p;
}

// Textbook Joseph-form step for the correlated-noise discrete model
//   x' = Phi x + (g, 0) w,  z = H x + r w,  H = (dt, 0),  w ~ N(0, dt).
KalmanState joseph_step(const KalmanState& s, const IntervalCoefficients& c, double z) {
  Eigen::Matrix2d phi;
  phi << 1.0, c.drift_per_field, 0.0, 1.0;
  const Eigen::RowVector2d h(c.dt, 0.0);
  const Eigen::Vector2d gn(c.noise_gain, 0.0);
  const double S = (h * s.v * h.transpose())(0, 0) + c.record_noise * c.record_noise * c.dt;
  const Eigen::Vector2d k = (phi * s.v * h.transpose() + gn * c.record_noise * c.dt) / S;
  KalmanState out = s;
  out.t = s.t + c.dt;
  out.x = phi * s.x + k * (z - (h * s.x)(0, 0));
  const Eigen::Matrix2d l = phi - k * h;
  const Eigen::Vector2d n = gn - k * c.record_noise;
  out.v = l * s.v * l.transpose() + n * n.transpose() * c.dt;
  return out;
}

}  // namespace

TEST_CASE("system matrices") {
  const auto p = fig2();
  for (double t : {0.0, 1e-9, 1e-5, 1e-3}) {
    const auto m = system_matrices(p, t);
    CHECK(m.a(0, 1) == doctest::Approx(p.gamma * p.j_total * std::exp(-0.5 * p.meas_strength * t)));
    CHECK(m.a(0, 0) == 0.0);
    CHECK(m.a(1, 0) == 0.0);
    CHECK(m.a(1, 1) == 0.0);
    CHECK(m.b(0) == conditional_variance(p, t));
    CHECK(m.b(1) == 0.0);
    CHECK(m.d == doctest::Approx(1.0 / (2.0 * std::sqrt(p.meas_strength))));
    CHECK(m.d > 0.0);
  }
}

TEST_CASE("gain at t = 0 with a finite prior") {
  const auto p = fig2();
  const auto s = kalman_init(p);
  const auto g = kalman_gain(s.v, system_matrices(p, 0.0));
  CHECK(g(0) == doctest::Approx(2.0 * p.meas_strength * p.efficiency * p.j_total));
  CHECK(g(1) == 0.0);
}

TEST_CASE("filter initialization") {
  const auto s = kalman_init(fig2());
  CHECK(s.x.isZero());
  CHECK(s.v(1, 1) == 1e-10);
  CHECK(s.v(0, 0) == 0.0);
  CHECK(s.v(0, 1) == 0.0);
  CHECK_FALSE(s.info_form);

  const auto inf = kalman_init(fig2(PriorVariance::infinite()));
  CHECK(inf.info_form);
  CHECK(std::isinf(inf.b_variance()));
}

TEST_CASE("infinite prior: field variance becomes finite once the record carries field information") {
  const auto p = fig2(PriorVariance::infinite());
  auto s = kalman_init(p);
  const auto grid = TimeGrid::uniform(1e-6, 1e-8);
  s = kalman_step(s, interval_coefficients(p, grid.t(0), grid.dt(0)), 1e-9);
  // the first step has no drift sensitivity yet: the record after it is
  // independent of B
  CHECK(std::isinf(s.b_variance()));
  s = kalman_step(s, interval_coefficients(p, grid.t(1), grid.dt(1)), 1e-9);
  CHECK(std::isfinite(s.b_variance()));
  CHECK(s.b_variance() > 0.0);
}

TEST_CASE("infinite prior agrees with a very wide finite prior by t = 10 dt") {
  const auto inf = fig2(PriorVariance::infinite());
  const auto wide = fig2(PriorVariance::of(1e6));
  const auto grid = TimeGrid::uniform(1e-6, 1e-8);
  const auto rec = simulate_trajectory(inf, grid, SeedSpec{5, 0});
  const auto a = run_filter(rec, inf);
  const auto b = run_filter(rec, wide);
  for (std::size_t k = 10; k < a.size(); ++k) {
    REQUIRE(b[k].b_variance() == doctest::Approx(a[k].b_variance()).epsilon(1e-6));
    REQUIRE(b[k].b_tilde() == doctest::Approx(a[k].b_tilde()).epsilon(1e-6));
  }
}

TEST_CASE("zero prior pins the field estimate") {
  const auto p = fig2(PriorVariance::of(0.0));
  const auto grid = TimeGrid::uniform(1e-5, 1e-8);
  const auto trace = run_filter(simulate_trajectory(p, grid, SeedSpec{2, 0}), p);
  for (const auto& s : trace) {
    REQUIRE(s.b_tilde() == 0.0);
    REQUIRE(s.b_variance() == 0.0);
  }
}

TEST_CASE("zero innovation: the estimate only drifts") {
  const auto p = fig2();
  KalmanState s = kalman_init(p);
  s.x << 10.0, 2e-6;
  const auto step = interval_coefficients(p, 1e-5, 1e-8);
  const auto next = kalman_step(s, step, s.x(0) * step.dt);
  CHECK(next.x(0) == doctest::Approx(s.x(0) + step.drift_per_field * s.x(1)).epsilon(1e-15));
  CHECK(next.x(1) == s.x(1));
}

TEST_CASE("factored covariance step equals the Joseph-form step") {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 500; ++trial) {
    PhysicalParams p = fig2();
    p.j_total = std::pow(10.0, 2.0 + 4.0 * u(rng));
    p.meas_strength = std::pow(10.0, 3.0 + 2.0 * u(rng));
    p.efficiency = 0.1 + 0.9 * u(rng);
    const double t = u(rng) / p.meas_strength;
    const double dt = 1e-3 / p.meas_strength * (0.1 + u(rng));
    const auto step = interval_coefficients(p, t, dt);
    // a full-rank covariance on the natural scales of Jz and B
    const double sb = 1e-8 * (0.1 + u(rng));
    const double sj = std::sqrt(p.j_total) * (0.1 + u(rng));
    const double rho = 2.0 * u(rng) - 1.0;
    Eigen::Matrix2d v;
    v << sj * sj, rho * sj * sb, rho * sj * sb, sb * sb;
    const Eigen::Vector2d x(sj * (u(rng) - 0.5), sb * (u(rng) - 0.5));
    const auto s = kalman_state_from(t, x, v);
    const double z = (x(0) + sj * (u(rng) - 0.5)) * dt;
    const auto a = kalman_step(s, step, z);
    const auto b = joseph_step(s, step, z);
    REQUIRE(a.x(0) == doctest::Approx(b.x(0)).epsilon(1e-9));
    REQUIRE(a.x(1) == doctest::Approx(b.x(1)).epsilon(1e-9));
    REQUIRE(a.v(0, 0) == doctest::Approx(b.v(0, 0)).epsilon(1e-9));
    REQUIRE(a.v(0, 1) == doctest::Approx(b.v(0, 1)).epsilon(1e-9));
    REQUIRE(a.v(1, 1) == doctest::Approx(b.v(1, 1)).epsilon(1e-9));
  }
}

TEST_CASE("covariance stays PSD, field variance never grows, gain stays non-negative") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 60; ++trial) {
    const auto p = random_params(rng);
    const auto grid = default_grid(p, p.t_total / 3000, 10, 2);
    const auto rec = simulate_trajectory(p, grid, SeedSpec{static_cast<std::uint64_t>(trial), 0});
    KalmanState s = kalman_init(p);
    double prev = s.b_variance();
    for (std::size_t k = 0; k < grid.n_steps(); ++k) {
      const auto step = interval_coefficients(p, grid.t(k), grid.dt(k));
      s = kalman_step(s, step, rec.d_xi[k]);
      if (s.info_form) continue;
      REQUIRE(covariance_is_psd(s.v));
      REQUIRE(s.v(0, 1) == s.v(1, 0));
      REQUIRE(s.b_variance() <= prev);
      prev = s.b_variance();
      REQUIRE(kalman_gain(s.v, system_matrices(p, s.t))(0) >= 0.0);
    }
  }
}

TEST_CASE("PSD check and its failure mode") {
  Eigen::Matrix2d v;
  v << 1.0, 0.0, 0.0, 1.0;
  CHECK(covariance_is_psd(v));
  v << 1.0, 2.0, 2.0, 1.0;
  CHECK_FALSE(covariance_is_psd(v));
  CHECK_THROWS_AS(kalman_state_from(0.0, Eigen::Vector2d::Zero(), v), NumericError);
}

TEST_CASE("closed-form threshold matches the information-integral oracle") {
  const auto p = fig2(PriorVariance::infinite());
  for (double t = 1e-12; t <= 2e-3; t *= 1.7) {
    CAPTURE(t);
    CHECK(riccati_analytic(p, t) ==
          doctest::Approx(std::sqrt(oracle::field_variance(p, t))).epsilon(1e-9));
  }
}

TEST_CASE("closed-form threshold: shape and domain") {
  const auto p = fig2(PriorVariance::infinite());
  double prev = std::numeric_limits<double>::infinity();
  for (double t = 1e-13; t <= 2e-3; t *= 1.3) {
    const double v = riccati_analytic(p, t);
    REQUIRE(v > 0.0);
    REQUIRE(v <= prev);
    prev = v;
  }
  // diverges as t -> 0+
  CHECK(riccati_analytic(p, 1e-15) > 1e3 * riccati_analytic(p, 1e-12));
  CHECK_THROWS_AS(riccati_analytic(p, 0.0), ParamError);
  CHECK_THROWS_AS(riccati_analytic(p, -1.0), ParamError);
  // past many decay times the Bloch vector is gone and the threshold plateaus
  CHECK(riccati_analytic(p, 2e-3) == doctest::Approx(riccati_analytic(p, 1e-3)).epsilon(0.02));
}

TEST_CASE("asymptotic threshold") {
  const auto p = fig2();
  CHECK(detection_threshold_asymptotic(p, 1e-3) == doctest::Approx(6.89e-12).epsilon(2e-3));
  auto q = p;
  q.j_total *= 2.0;
  CHECK(detection_threshold_asymptotic(q, 1e-3) ==
        doctest::Approx(0.5 * detection_threshold_asymptotic(p, 1e-3)).epsilon(1e-14));
  CHECK(detection_threshold_asymptotic(p, 1e-3) / detection_threshold_asymptotic(p, 8e-3) ==
        doctest::Approx(std::pow(8.0, 1.5)).epsilon(1e-14));
  CHECK(std::pow(8.0, 1.5) == doctest::Approx(22.6).epsilon(2e-3));

  WarningCapture cap;
  detection_threshold_asymptotic(p, 5.0 / (p.j_total * p.meas_strength));
  CHECK(cap.contains("10/(JM)"));
  WarningCapture quiet;
  detection_threshold_asymptotic(p, 1e-6);
  CHECK(quiet.messages().empty());
}

TEST_CASE("asymptotic and closed-form thresholds agree while the Bloch vector is intact") {
  const auto p = fig2(PriorVariance::infinite());
  const double t_jm = 1.0 / (p.j_total * p.meas_strength);
  WarningCapture quiet;
  CHECK(detection_threshold_asymptotic(p, 100 * t_jm) / riccati_analytic(p, 100 * t_jm) ==
        doctest::Approx(1.0).epsilon(0.05));
  for (double t = 100 * t_jm; t <= 0.1 / p.meas_strength; t *= 1.25) {
    CAPTURE(t);
    CHECK(std::abs(detection_threshold_asymptotic(p, t) / riccati_analytic(p, t) - 1.0) <= 0.05);
  }
}

TEST_CASE("asymptotic form departs from the closed form by Mt ~ 1") {
  // The t^{-3/2} law ignores the Bloch-vector decay; at t = 1/M it
  // underestimates the closed form by about a fifth.
  const auto p = fig2(PriorVariance::infinite());
  const double t = 1.0 / p.meas_strength;
  const double ratio = detection_threshold_asymptotic(p, t) / riccati_analytic(p, t);
  CHECK(ratio == doctest::Approx(0.785).epsilon(0.01));
}

TEST_CASE("shotnoise reference") {
  const auto p = fig2();
  const double expected = 1.0 / (2.0 * std::numbers::pi * 1e6 * std::sqrt(4e6 * 2e-5 * 1e-3));
  CHECK(shotnoise_limit(p, 1e-3) == doctest::Approx(expected).epsilon(1e-14));
  CHECK(shotnoise_limit(p, 1e-3) == doctest::Approx(1.78e-8).epsilon(2e-3));
  CHECK(shotnoise_limit(p, 4e-3) == doctest::Approx(0.5 * shotnoise_limit(p, 1e-3)).epsilon(1e-14));
  auto q = p;
  q.j_total *= 4.0;
  CHECK(shotnoise_limit(q, 1e-3) == doctest::Approx(0.5 * shotnoise_limit(p, 1e-3)).epsilon(1e-14));
  CHECK_THROWS_AS(shotnoise_limit(p, 0.0), ParamError);
}

TEST_CASE("threshold curves are positive and non-increasing") {
  const auto p = fig2();
  std::vector<double> times;
  for (double t = 1e-8; t <= 2e-3; t *= 1.5) times.push_back(t);
  for (auto src : {ThresholdSource::riccati_numeric, ThresholdSource::riccati_analytic,
                   ThresholdSource::asymptotic, ThresholdSource::shotnoise}) {
    const auto c = threshold_curve(src == ThresholdSource::riccati_analytic
                                       ? fig2(PriorVariance::infinite())
                                       : p,
                                   times, src);
    CAPTURE(to_string(src));
    REQUIRE(c.delta_b.size() == times.size());
    for (std::size_t i = 0; i < times.size(); ++i) {
      REQUIRE(c.delta_b[i] > 0.0);
      if (i) REQUIRE(c.delta_b[i] <= c.delta_b[i - 1]);
    }
  }
}

namespace {

TrajectoryRecord synthetic_record(const TimeGrid& grid, auto&& rate) {
  TrajectoryRecord rec{grid, {}, {}, {}, {}};
  for (std::size_t k = 0; k < grid.n_steps(); ++k) {
    rec.d_xi.push_back(rate(grid.t(k)) * grid.dt(k));
    rec.y.push_back(0.0);
    rec.noise.push_back(0.0);
  }
  return rec;
}

}  // namespace

TEST_CASE("regression: exact linear data") {
  const auto p = fig2();
  const auto grid = TimeGrid::uniform(1e-6, 1e-9);
  const auto rec = synthetic_record(grid, [&](double t) { return p.gamma * p.b_true * p.j_total * t; });
  CHECK(regression_estimate(rec, p, 1e-6, RegressionAbscissa::elapsed_time) ==
        doctest::Approx(p.b_true).epsilon(1e-10));
}

TEST_CASE("regression: a constant offset goes into the intercept") {
  const auto p = fig2();
  const auto grid = TimeGrid::uniform(1e-6, 1e-9);
  const auto rec = synthetic_record(grid, [](double) { return 1234.0; });
  for (auto a : {RegressionAbscissa::elapsed_time, RegressionAbscissa::decay_compensated})
    CHECK(std::abs(regression_estimate(rec, p, 1e-6, a)) <= 1e-10 * p.b_true);
}

TEST_CASE("regression on the decay-compensated abscissa is exact on noiseless records") {
  auto p = fig2();
  p.t_total = 1e-3;  // Mt = 100
  const auto grid = TimeGrid::uniform(p.t_total, 1e-7);
  const auto rec = simulate_trajectory(p, grid, SeedSpec{}, NoiseMode::zero);
  for (double t_end : {1e-6, 1e-5, 1e-4, 1e-3})
    CHECK(regression_estimate(rec, p, t_end) == doctest::Approx(p.b_true).epsilon(1e-8));
}

TEST_CASE("regression guards") {
  auto p = fig2();
  const auto grid = TimeGrid::uniform(1e-4, 1e-7);
  const auto rec = simulate_trajectory(p, grid, SeedSpec{}, NoiseMode::zero);
  WarningCapture cap;
  regression_estimate(rec, p, 1e-4, RegressionAbscissa::elapsed_time);
  CHECK(cap.contains("M * t_end"));
  CHECK_THROWS_AS(regression_estimate(rec, p, 2e-7), ParamError);
  CHECK_THROWS_AS(regression_estimate(rec, p, 2e-4), ParamError);
}
