#pragma once

// Physical parameters, unit conventions, time grids and seed specs shared by
// every other module.

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace qkfmag {

/// Raised when a PhysicalParams (or anything derived from it) violates an
/// invariant. `violations()` holds one message per offending field.
class ParamError : public std::invalid_argument {
public:
  explicit ParamError(std::vector<std::string> violations);
  const std::vector<std::string>& violations() const noexcept { return violations_; }

private:
  std::vector<std::string> violations_;
};

/// Raised when a numerical invariant (PSD covariance, density-matrix
/// positivity, Riccati validity window) is lost.
class NumericError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Prior variance of the field estimate in G^2. Infinite is a distinguished
/// value rather than a large float.
class PriorVariance {
public:
  static PriorVariance infinite() noexcept { return PriorVariance(true, 0.0); }
  static PriorVariance of(double gauss2) noexcept { return PriorVariance(false, gauss2); }

  bool is_infinite() const noexcept { return infinite_; }
  /// Finite value in G^2; +inf when infinite.
  double value() const noexcept {
    return infinite_ ? std::numeric_limits<double>::infinity() : value_;
  }
  bool operator==(const PriorVariance&) const = default;

private:
  PriorVariance(bool inf, double v) noexcept : infinite_(inf), value_(v) {}
  bool infinite_ = true;
  double value_ = 0.0;
};

/// The experiment definition. SI seconds and gauss; gamma is angular
/// (rad s^-1 G^-1).
struct PhysicalParams {
  double j_total = 0.0;
  double gamma = 0.0;
  double b_true = 0.0;
  double meas_strength = 0.0;
  double efficiency = 1.0;
  PriorVariance prior_b_variance = PriorVariance::infinite();
  double t_total = 0.0;
};

std::vector<std::string> param_violations(const PhysicalParams& p);

/// Returns `p` unchanged when every invariant holds, otherwise throws
/// ParamError listing all of them.
const PhysicalParams& validate_params(const PhysicalParams& p);

enum class GammaConvention { angular, cycles };

/// kHz/mG read as a cycle frequency -> rad s^-1 G^-1.
double gamma_from_cycles(double khz_per_mg);
double gamma_to_cycles(double angular_gamma);
/// kHz/mG under the chosen convention -> rad s^-1 G^-1.
double gamma_from_config(double khz_per_mg, GammaConvention convention);

double larmor_frequency(const PhysicalParams& p);  // rad/s
double t2_bound(const PhysicalParams& p);          // s
double snr(const PhysicalParams& p);
/// 2 eta M J, the rate at which the conditional Jz variance collapses.
double collapse_rate(const PhysicalParams& p);

/// Strictly increasing time points starting at 0.
class TimeGrid {
public:
  static TimeGrid uniform(double t_total, double dt_max);
  /// Log-spaced points anchor * 10^(i/per_decade) starting `decades_below`
  /// decades under `anchor`, followed by a uniform tail k*dt once the log
  /// spacing would exceed dt. dt = t_total / ceil(t_total / dt_max).
  static TimeGrid with_log_prefix(double t_total, double dt_max, double anchor,
                                  int points_per_decade, int decades_below);
  static TimeGrid from_points(std::vector<double> points);

  std::size_t n_steps() const noexcept { return points_.size() - 1; }
  std::size_t size() const noexcept { return points_.size(); }
  double t(std::size_t k) const { return points_[k]; }
  double dt(std::size_t k) const { return points_[k + 1] - points_[k]; }
  double t_total() const noexcept { return points_.back(); }
  double max_dt() const;
  bool is_uniform(double rel_tol = 1e-9) const;
  std::span<const double> points() const noexcept { return points_; }

  /// Index of the grid point closest to `t`.
  std::size_t nearest_index(double t) const;
  /// Grid truncated after index `last` (inclusive).
  TimeGrid truncated(std::size_t last) const;

private:
  explicit TimeGrid(std::vector<double> points) : points_(std::move(points)) {}
  std::vector<double> points_;
};

/// Grid used for the Fig. 2 style runs: log prefix anchored at 1/(JM),
/// uniform tail with dt_max = 1e-3/M unless given.
TimeGrid default_grid(const PhysicalParams& p, double dt_max = 0.0,
                      int points_per_decade = 30, int decades_below = 3);

struct SeedSpec {
  std::uint64_t master_seed = 0;
  std::uint64_t stream_index = 0;
  bool operator==(const SeedSpec&) const = default;
};

}  // namespace qkfmag
