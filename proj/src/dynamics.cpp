#include "qkfmag/dynamics.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "qkfmag/log.hpp"
#include "qkfmag/random.hpp"

namespace qkfmag {

double conditional_variance(const PhysicalParams& p, double t) {
  if (t < 0.0) throw ParamError({"t: conditional variance needs t >= 0"});
  return 0.5 * p.j_total / (1.0 + collapse_rate(p) * t);
}

double bloch_length(const PhysicalParams& p, double t) {
  return p.j_total * std::exp(-0.5 * p.meas_strength * t);
}

IntervalCoefficients interval_coefficients(const PhysicalParams& p, double t, double dt) {
  IntervalCoefficients c;
  c.t = t;
  c.dt = dt;
  const double half_m = 0.5 * p.meas_strength;
  // gamma J int_t^{t+dt} e^{-M s/2} ds = gamma J e^{-M t/2} (1 - e^{-M dt/2}) / (M/2)
  c.drift_per_field = p.gamma * p.j_total * std::exp(-half_m * t) * (-std::expm1(-half_m * dt)) / half_m;
  c.var_mid = conditional_variance(p, t + 0.5 * dt);
  const double root = std::sqrt(p.meas_strength * p.efficiency);
  c.noise_gain = 2.0 * root * c.var_mid;
  c.record_noise = 0.5 / root;
  return c;
}

double step_mean(const ConditionalState& state, const PhysicalParams& p, double dt, double dW) {
  return step_mean(state.mean_jz, interval_coefficients(p, state.t, dt), p.b_true, dW);
}

PhotocurrentSample photocurrent_increment(double mean_jz, const PhysicalParams& p, double dt,
                                          double dW) {
  const double d_xi = mean_jz * dt + 0.5 / std::sqrt(p.meas_strength * p.efficiency) * dW;
  return {d_xi * 2.0 * p.efficiency * std::sqrt(p.meas_strength) / dt, d_xi};
}

namespace {

void check_small_angle(const PhysicalParams& p) {
  const double angle = std::abs(larmor_frequency(p)) * p.t_total;
  if (angle > 0.1) {
    std::ostringstream os;
    os << "omega_L * t_total = " << angle
       << " > 0.1; the Gaussian model assumes small-angle precession";
    warn(os.str());
  }
}

template <class NoiseFn>
TrajectoryRecord simulate_impl(const PhysicalParams& p, const TimeGrid& grid, NoiseFn&& next_dw) {
  validate_params(p);
  check_small_angle(p);
  const std::size_t n = grid.n_steps();
  TrajectoryRecord rec{grid, {}, {}, {}, {}};
  rec.states.reserve(n + 1);
  rec.d_xi.reserve(n);
  rec.y.reserve(n);
  rec.noise.reserve(n);

  const double y_scale = 2.0 * p.efficiency * std::sqrt(p.meas_strength);
  double mean = 0.0;
  rec.states.push_back({0.0, 0.0, conditional_variance(p, 0.0), p.j_total});
  for (std::size_t k = 0; k < n; ++k) {
    const double t = grid.t(k);
    const double dt = grid.dt(k);
    const double dw = next_dw(k, dt);
    const auto step = interval_coefficients(p, t, dt);
    const double d_xi = record_increment(mean, step, dw);
    mean = step_mean(mean, step, p.b_true, dw);
    const double t1 = grid.t(k + 1);
    rec.states.push_back({t1, mean, conditional_variance(p, t1), bloch_length(p, t1)});
    rec.d_xi.push_back(d_xi);
    rec.y.push_back(d_xi * y_scale / dt);
    rec.noise.push_back(dw);
  }
  return rec;
}

}  // namespace

TrajectoryRecord simulate_trajectory(const PhysicalParams& p, const TimeGrid& grid, SeedSpec seed,
                                     NoiseMode mode) {
  GaussianStream rng(seed);
  return simulate_impl(p, grid, [&](std::size_t, double dt) {
    if (mode == NoiseMode::zero) return 0.0;
    return std::sqrt(dt) * rng.next();
  });
}

TrajectoryRecord simulate_trajectory(const PhysicalParams& p, const TimeGrid& grid,
                                     std::span<const double> noise) {
  if (noise.size() != grid.n_steps())
    throw ParamError({"noise: need exactly one dW per grid step"});
  return simulate_impl(p, grid, [&](std::size_t k, double) { return noise[k]; });
}

std::vector<double> reconstruct_noise(const TrajectoryRecord& rec, const PhysicalParams& p) {
  std::vector<double> dw(rec.d_xi.size());
  const double root = 2.0 * std::sqrt(p.meas_strength * p.efficiency);
  for (std::size_t k = 0; k < dw.size(); ++k)
    dw[k] = (rec.d_xi[k] - rec.states[k].mean_jz * rec.grid.dt(k)) * root;
  return dw;
}

double default_cutoff_hz(const PhysicalParams& p) { return std::sqrt(p.j_total) / p.t_total; }

std::vector<double> lowpass_filter(std::span<const double> input, std::span<const double> dts,
                                   double cutoff_hz) {
  if (!(cutoff_hz > 0.0)) throw ParamError({"cutoff: must be positive"});
  if (dts.size() != input.size()) throw ParamError({"dts: need one dt per sample"});
  std::vector<double> out(input.size());
  if (input.empty()) return out;
  const double omega = 2.0 * std::numbers::pi * cutoff_hz;
  double state = input[0];
  for (std::size_t k = 0; k < input.size(); ++k) {
    const double a = -std::expm1(-omega * dts[k]);
    if (k > 0) state += a * (input[k] - state);
    out[k] = state;
  }
  return out;
}

std::vector<double> lowpass_filter(std::span<const double> input, double dt, double cutoff_hz) {
  std::vector<double> dts(input.size(), dt);
  return lowpass_filter(input, dts, cutoff_hz);
}

}  // namespace qkfmag
