#pragma once

// Ensemble execution over many independent trajectories, empirical error
// statistics and the J-scaling study.

#include <cstdint>
#include <map>
#include <span>
#include <string_view>
#include <vector>

#include "qkfmag/core.hpp"
#include "qkfmag/estimators.hpp"

namespace qkfmag {

enum class Estimator { qkf, regression };
std::string_view to_string(Estimator e);

/// Stream i of the run seeded by `master_seed`. Streams are disjoint counter
/// ranges of one Philox key, so distinct i never collide.
SeedSpec substream(std::uint64_t master_seed, std::uint64_t i);

struct EnsembleSpec {
  PhysicalParams params;
  TimeGrid grid = TimeGrid::uniform(1.0, 1.0);
  std::uint64_t n_traj = 0;
  std::uint64_t master_seed = 0;
  std::vector<Estimator> estimators{Estimator::qkf, Estimator::regression};
  std::vector<std::size_t> checkpoints;  // grid indices, sorted
  unsigned threads = 0;                  // 0: hardware concurrency
  RegressionAbscissa abscissa = RegressionAbscissa::decay_compensated;
};

/// Grid indices log-spaced at `per_decade` between t_from and t_to, merged
/// with the nearest indices of `extra_times`. Indices below 3 are dropped.
std::vector<std::size_t> log_checkpoints(const TimeGrid& grid, int per_decade, double t_from,
                                         double t_to, std::span<const double> extra_times = {});

struct CheckpointStats {
  double t = 0.0;
  double mse = 0.0;            // E[(b - B)^2], G^2
  double stderr_mse = 0.0;     // standard error of mse
  double mean_b_tilde = 0.0;   // G
  double stderr_mean = 0.0;    // standard error of mean_b_tilde
  double predicted_v22 = 0.0;  // Riccati V22 at t, G^2
};

struct EnsembleStats {
  std::uint64_t n_traj = 0;
  std::uint64_t master_seed = 0;
  std::vector<std::size_t> checkpoints;
  std::map<Estimator, std::vector<CheckpointStats>> by_estimator;

  const std::vector<CheckpointStats>& at(Estimator e) const { return by_estimator.at(e); }
};

/// Results do not depend on the worker count: trajectories are reduced in
/// fixed blocks, in index order.
EnsembleStats run_ensemble(const EnsembleSpec& spec);

/// Field error of each requested estimator at each checkpoint for trajectory
/// `i` alone; what run_ensemble accumulates. Row = checkpoint.
std::map<Estimator, std::vector<double>> trajectory_errors(const EnsembleSpec& spec, std::uint64_t i);

struct ScalingSpec {
  EnsembleSpec base;  // params/seed/n_traj/estimators; grid and checkpoints are rebuilt per J
  std::vector<double> j_values;
  double t_check = 1e-3;
  double dt_max = 0.0;  // 0: 1e-3 / M
  int points_per_decade = 30;
  int decades_below = 3;
};

struct ScalingResult {
  double t_check = 0.0;
  std::vector<double> j_values;
  std::map<Estimator, std::vector<double>> rms;
  std::vector<double> riccati_delta_b;
  std::vector<double> asymptotic_delta_b;
  std::vector<double> shotnoise_delta_b;
  std::map<Estimator, double> slopes;
  double riccati_slope = 0.0;
  double asymptotic_slope = 0.0;
  double shotnoise_slope = 0.0;
};

/// Least-squares slope of log(rms) against log(J). Needs >= 4 J values
/// spanning >= 2 decades.
ScalingResult scaling_study(const ScalingSpec& spec);

double fit_loglog_slope(std::span<const double> x, std::span<const double> y);

}  // namespace qkfmag
