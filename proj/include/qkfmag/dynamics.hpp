#pragma once

// Gaussian conditional spin dynamics under continuous QND measurement of Jz,
// and the homodyne photocurrent it produces.

#include <span>
#include <vector>

#include "qkfmag/core.hpp"

namespace qkfmag {

struct ConditionalState {
  double t = 0.0;
  double mean_jz = 0.0;
  double var_jz = 0.0;
  double bloch_length = 0.0;
};

/// <dJz^2>(t) = (J/2) / (1 + 2 eta M J t), the exact solution of the
/// deterministic variance equation from the coherent-state value J/2.
double conditional_variance(const PhysicalParams& p, double t);

/// J exp(-M t / 2)
double bloch_length(const PhysicalParams& p, double t);

/// Everything about one step [t, t+dt] that does not depend on the noise.
/// Shared by the simulator and the filter so both see the same discrete model.
struct IntervalCoefficients {
  double t = 0.0;
  double dt = 0.0;
  /// gamma J * integral of exp(-M s / 2) over the step; multiply by B for the drift
  double drift_per_field = 0.0;
  /// conditional variance at the step midpoint
  double var_mid = 0.0;
  /// 2 sqrt(M eta) var_mid: coefficient of dW in the mean update
  double noise_gain = 0.0;
  /// D = 1 / (2 sqrt(M eta)): coefficient of dW in the record increment
  double record_noise = 0.0;
};

IntervalCoefficients interval_coefficients(const PhysicalParams& p, double t, double dt);

/// One Euler-Maruyama step of the conditional mean. `dW` has variance dt and
/// must be the same increment later handed to photocurrent_increment.
double step_mean(const ConditionalState& state, const PhysicalParams& p, double dt, double dW);
inline double step_mean(double mean_jz, const IntervalCoefficients& step, double b_field,
                        double dW) {
  return mean_jz + step.drift_per_field * b_field + step.noise_gain * dW;
}

struct PhotocurrentSample {
  double y = 0.0;     // photocurrent sample y(t)
  double d_xi = 0.0;  // record increment y dt / (2 eta sqrt(M))
};

PhotocurrentSample photocurrent_increment(double mean_jz, const PhysicalParams& p, double dt,
                                          double dW);

/// d_xi = mean_jz dt + D dW, the record increment for one step.
inline double record_increment(double mean_jz, const IntervalCoefficients& step, double dW) {
  return mean_jz * step.dt + step.record_noise * dW;
}

struct TrajectoryRecord {
  TimeGrid grid;
  std::vector<ConditionalState> states;  // n_steps + 1
  std::vector<double> d_xi;              // n_steps
  std::vector<double> y;                 // n_steps
  std::vector<double> noise;             // n_steps, the dW draws
};

enum class NoiseMode { stochastic, zero };

/// Deterministic in (p, grid, seed). Emits a warning when omega_L t_total > 0.1
/// (outside the small-angle regime the model assumes).
TrajectoryRecord simulate_trajectory(const PhysicalParams& p, const TimeGrid& grid, SeedSpec seed,
                                     NoiseMode mode = NoiseMode::stochastic);

/// Simulate using a caller-supplied dW sequence (one per step).
TrajectoryRecord simulate_trajectory(const PhysicalParams& p, const TimeGrid& grid,
                                     std::span<const double> noise);

/// dW recovered from (d_xi, mean_jz): inverse of photocurrent_increment.
std::vector<double> reconstruct_noise(const TrajectoryRecord& record, const PhysicalParams& p);

/// sqrt(J) / t_total in Hz: the caption's 2 pi sqrt(J)/t_tot read as rad/s.
double default_cutoff_hz(const PhysicalParams& p);

/// Causal single-pole low-pass with -3 dB point at `cutoff_hz`:
/// out_k = out_{k-1} + a_k (in_k - out_{k-1}), a_k = 1 - exp(-2 pi f_c dt_k).
/// `dts` holds one spacing per sample (the first is the spacing before sample 0).
std::vector<double> lowpass_filter(std::span<const double> input, std::span<const double> dts,
                                   double cutoff_hz);
std::vector<double> lowpass_filter(std::span<const double> input, double dt, double cutoff_hz);

}  // namespace qkfmag
