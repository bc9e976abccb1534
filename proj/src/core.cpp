#include "qkfmag/core.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace qkfmag {

namespace {

std::string join(const std::vector<std::string>& items) {
  std::ostringstream os;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) os << "; ";
    os << items[i];
  }
  return os.str();
}

}  // namespace

ParamError::ParamError(std::vector<std::string> violations)
    : std::invalid_argument(join(violations)), violations_(std::move(violations)) {}

std::vector<std::string> param_violations(const PhysicalParams& p) {
  std::vector<std::string> out;
  if (!(p.j_total > 0.0) || !std::isfinite(p.j_total))
    out.emplace_back("j_total: must be positive and finite");
  if (!std::isfinite(p.gamma))
    out.emplace_back("gamma: must be finite");
  if (!std::isfinite(p.b_true))
    out.emplace_back("b_true: must be finite");
  if (!(p.meas_strength > 0.0) || !std::isfinite(p.meas_strength))
    out.emplace_back("meas_strength: measurement strength must be positive");
  if (!(p.efficiency > 0.0 && p.efficiency <= 1.0))
    out.emplace_back("efficiency: efficiency must be in (0,1]");
  if (!p.prior_b_variance.is_infinite()) {
    const double v = p.prior_b_variance.value();
    if (!(v >= 0.0) || !std::isfinite(v))
      out.emplace_back("prior_b_variance: must be >= 0 or infinite");
  }
  if (!(p.t_total > 0.0) || !std::isfinite(p.t_total))
    out.emplace_back("t_total: must be positive");
  return out;
}

const PhysicalParams& validate_params(const PhysicalParams& p) {
  auto v = param_violations(p);
  if (!v.empty()) throw ParamError(std::move(v));
  return p;
}

double gamma_from_cycles(double khz_per_mg) {
  if (!(khz_per_mg > 0.0)) throw ParamError({"gamma: must be positive"});
  // kHz/mG = 1e3 Hz / 1e-3 G = 1e6 Hz/G
  return 2.0 * std::numbers::pi * khz_per_mg * 1e6;
}

double gamma_to_cycles(double angular_gamma) {
  return angular_gamma / (2.0 * std::numbers::pi * 1e6);
}

double gamma_from_config(double khz_per_mg, GammaConvention convention) {
  if (convention == GammaConvention::cycles) return gamma_from_cycles(khz_per_mg);
  if (!(khz_per_mg > 0.0)) throw ParamError({"gamma: must be positive"});
  return khz_per_mg * 1e6;
}

double larmor_frequency(const PhysicalParams& p) { return p.gamma * p.b_true; }
double t2_bound(const PhysicalParams& p) { return 2.0 / p.meas_strength; }
double snr(const PhysicalParams& p) { return p.j_total * std::sqrt(p.meas_strength); }
double collapse_rate(const PhysicalParams& p) {
  return 2.0 * p.efficiency * p.meas_strength * p.j_total;
}

// ---------------------------------------------------------------------------

TimeGrid TimeGrid::from_points(std::vector<double> points) {
  if (points.size() < 2) throw ParamError({"grid: need at least one step"});
  if (points.front() != 0.0) throw ParamError({"grid: must start at t = 0"});
  for (std::size_t k = 1; k < points.size(); ++k) {
    if (!(points[k] > points[k - 1]) || !std::isfinite(points[k]))
      throw ParamError({"grid: points must be strictly increasing"});
  }
  return TimeGrid(std::move(points));
}

TimeGrid TimeGrid::uniform(double t_total, double dt_max) {
  if (!(t_total > 0.0) || !(dt_max > 0.0))
    throw ParamError({"grid: t_total and dt must be positive"});
  const auto n = static_cast<std::size_t>(std::ceil(t_total / dt_max * (1.0 - 1e-12)));
  const std::size_t steps = std::max<std::size_t>(n, 1);
  const double dt = t_total / static_cast<double>(steps);
  std::vector<double> pts(steps + 1);
  for (std::size_t k = 0; k <= steps; ++k) pts[k] = static_cast<double>(k) * dt;
  pts.back() = t_total;
  return TimeGrid(std::move(pts));
}

TimeGrid TimeGrid::with_log_prefix(double t_total, double dt_max, double anchor,
                                   int points_per_decade, int decades_below) {
  if (points_per_decade <= 0) return uniform(t_total, dt_max);
  if (!(t_total > 0.0) || !(dt_max > 0.0) || !(anchor > 0.0) || decades_below < 0)
    throw ParamError({"grid: invalid log-prefix specification"});

  const auto n = std::max<std::size_t>(
      static_cast<std::size_t>(std::ceil(t_total / dt_max * (1.0 - 1e-12))), 1);
  const double dt = t_total / static_cast<double>(n);
  const double ratio = std::pow(10.0, 1.0 / points_per_decade);
  // first uniform index whose log spacing would already be >= dt
  const auto k0 = static_cast<std::size_t>(std::ceil(1.0 / (ratio - 1.0)));

  std::vector<double> pts{0.0};
  const double t_switch = static_cast<double>(std::min(k0, n)) * dt;
  for (int i = -decades_below * points_per_decade;; ++i) {
    const double t = anchor * std::pow(10.0, static_cast<double>(i) / points_per_decade);
    if (t >= t_switch * (1.0 - 1e-9)) break;
    pts.push_back(t);
  }
  for (std::size_t k = std::min(k0, n); k <= n; ++k) pts.push_back(static_cast<double>(k) * dt);
  pts.back() = t_total;
  return from_points(std::move(pts));
}

double TimeGrid::max_dt() const {
  double m = 0.0;
  for (std::size_t k = 0; k + 1 < points_.size(); ++k) m = std::max(m, dt(k));
  return m;
}

bool TimeGrid::is_uniform(double rel_tol) const {
  const double d0 = dt(0);
  for (std::size_t k = 1; k < n_steps(); ++k)
    if (std::abs(dt(k) - d0) > rel_tol * d0) return false;
  return true;
}

std::size_t TimeGrid::nearest_index(double t) const {
  auto it = std::lower_bound(points_.begin(), points_.end(), t);
  if (it == points_.end()) return points_.size() - 1;
  auto idx = static_cast<std::size_t>(it - points_.begin());
  if (idx > 0 && (t - points_[idx - 1]) < (points_[idx] - t)) --idx;
  return idx;
}

TimeGrid TimeGrid::truncated(std::size_t last) const {
  if (last == 0 || last >= points_.size())
    throw ParamError({"grid: truncation index out of range"});
  return TimeGrid(std::vector<double>(points_.begin(),
                                      points_.begin() + static_cast<std::ptrdiff_t>(last) + 1));
}

TimeGrid default_grid(const PhysicalParams& p, double dt_max, int points_per_decade,
                      int decades_below) {
  validate_params(p);
  if (dt_max <= 0.0) dt_max = 1e-3 / p.meas_strength;
  const double anchor = 1.0 / (p.j_total * p.meas_strength);
  return TimeGrid::with_log_prefix(p.t_total, dt_max, anchor, points_per_decade, decades_below);
}

}  // namespace qkfmag
