#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "qkfmag/core.hpp"
#include "qkfmag/estimators.hpp"
#include "qkfmag/montecarlo.hpp"

namespace qkfmag {

/// Syntax errors carry a 1-based line; semantic errors carry the dotted path
/// of the offending field.
class ConfigError : public std::runtime_error {
public:
  ConfigError(std::string message, std::string field, int line = 0);
  const std::string& field() const noexcept { return field_; }
  int line() const noexcept { return line_; }

private:
  std::string field_;
  int line_;
};

struct GridConfig {
  double dt_max = 0.0;  // s; 0 picks 1e-3 / M
  int points_per_decade = 30;
  int decades_below = 3;
};

struct SimulateConfig {
  bool zero_noise = false;
  double cutoff_hz = 0.0;  // 0 picks sqrt(J) / t_total
  std::uint64_t stream = 0;
};

struct EnsembleConfig {
  std::uint64_t n_traj = 10000;
  std::vector<Estimator> estimators{Estimator::qkf, Estimator::regression};
  int checkpoints_per_decade = 10;
  double t_from = 0.0;  // s; 0 picks 1/(JM)
  std::vector<double> check_times{1e-5, 1e-4, 1e-3};
  double optimality_tolerance = 0.1;
  RegressionAbscissa abscissa = RegressionAbscissa::decay_compensated;
};

struct ScalingConfig {
  std::vector<double> j_values{1e4, 1e5, 1e6, 4e6};
  double t_check = 1e-3;
  std::uint64_t n_traj = 2000;
  double slope_target = -1.0;
  double slope_tolerance = 0.05;
};

struct OracleConfig {
  double t_end = 0.0;  // s; 0 picks 0.1 / M
  std::uint64_t n_seeds = 1;
  bool dephasing_check = true;
  double dephasing_j = 5.0;
  double dephasing_t_end = 0.0;  // s; 0 picks 1 / M
  double dephasing_tolerance = 0.01;
};

struct RunConfig {
  PhysicalParams params;
  double gamma_khz_per_mg = 0.0;
  GammaConvention gamma_convention = GammaConvention::cycles;
  std::uint64_t seed = 0;
  unsigned threads = 0;
  std::string name;
  GridConfig grid;
  SimulateConfig simulate;
  EnsembleConfig ensemble;
  ScalingConfig scaling;
  OracleConfig oracle;
};

/// Parses a JSON document. Quantities accept a bare number in base units
/// (s, G, G^2, s^-1) or a string with a unit, e.g. "2 ms", "1 uG",
/// "100 uG2", "100 kHz"; gamma is in kHz/mG and converted per
/// gamma_convention. Unknown keys are rejected at every level.
RunConfig parse_config(std::string_view text);
RunConfig load_config(const std::string& path);

/// Switches the convention and re-derives the angular gamma.
void set_gamma_convention(RunConfig& cfg, GammaConvention convention);
GammaConvention parse_gamma_convention(std::string_view name);
std::string_view to_string(GammaConvention c);

/// Fully resolved configuration in base units, as one JSON document.
std::string resolved_json(const RunConfig& cfg, int indent = -1);

/// Value of a quantity string in base units of `dimension` ("time", "field",
/// "field2", "rate", "gamma"). Throws ConfigError naming `field`.
double parse_quantity(std::string_view text, std::string_view dimension, std::string_view field);

}  // namespace qkfmag
