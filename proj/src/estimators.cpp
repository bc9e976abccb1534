#include "qkfmag/estimators.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "qkfmag/log.hpp"

namespace qkfmag {

SystemMatrices system_matrices(const PhysicalParams& p, double t) {
  SystemMatrices m;
  m.a.setZero();
  m.a(0, 1) = p.gamma * p.j_total * std::exp(-0.5 * p.meas_strength * t);
  m.b << conditional_variance(p, t), 0.0;
  m.c << 1.0, 0.0;
  m.d = 0.5 / std::sqrt(p.meas_strength * p.efficiency);
  return m;
}

Eigen::Vector2d kalman_gain(const Eigen::Matrix2d& v, const SystemMatrices& mats) {
  return (mats.b + v * mats.c.transpose()) / (mats.d * mats.d);
}

double KalmanState::b_variance() const {
  return info_form ? std::numeric_limits<double>::infinity() : v(1, 1);
}

KalmanState kalman_init(const PhysicalParams& p) {
  validate_params(p);
  KalmanState s;
  if (p.prior_b_variance.is_infinite()) {
    s.info_form = true;
    s.v(1, 1) = std::numeric_limits<double>::infinity();
  } else {
    s.v(1, 1) = p.prior_b_variance.value();
  }
  return s;
}

KalmanState kalman_state_from(double t, const Eigen::Vector2d& x, const Eigen::Matrix2d& v) {
  if (!covariance_is_psd(v)) throw NumericError("kalman_state_from: covariance is not PSD");
  KalmanState s;
  s.t = t;
  s.x = x;
  s.v = v;
  if (v(1, 1) > 0.0) {
    s.sensitivity = v(0, 1) / v(1, 1);
    s.residual_var = std::max(0.0, v(0, 0) - v(0, 1) * s.sensitivity);
  } else {
    s.residual_var = v(0, 0);
  }
  return s;
}

bool covariance_is_psd(const Eigen::Matrix2d& v, double rel_tol) {
  const double tr = v(0, 0) + v(1, 1);
  const double diff = 0.5 * (v(0, 0) - v(1, 1));
  const double half_gap = std::sqrt(diff * diff + v(0, 1) * v(0, 1));
  const double min_eig = 0.5 * tr - half_gap;
  return std::isfinite(min_eig) && min_eig >= -rel_tol * std::abs(tr);
}

KalmanState kalman_step(const KalmanState& s, const IntervalCoefficients& step, double d_xi) {
  const double dt = step.dt;
  const double phi = step.drift_per_field;
  const double g = step.noise_gain;
  const double r = step.record_noise;
  KalmanState out = s;
  out.t = s.t + dt;

  if (s.info_form) {
    // d_xi - offset dt = sensitivity dt B + r dW: a scalar regression for B.
    const double resid = d_xi - s.offset * dt;
    const double r2 = r * r;
    out.information = s.information + s.sensitivity * s.sensitivity * dt / r2;
    out.score = s.score + s.sensitivity * resid / r2;
    const double feedback = g / r;
    out.offset = s.offset + feedback * resid;
    out.sensitivity = s.sensitivity + phi - feedback * s.sensitivity * dt;
    if (out.information > 0.0) {
      out.info_form = false;
      const double var_b = 1.0 / out.information;
      const double b = out.score * var_b;
      out.x << out.offset + out.sensitivity * b, b;
      out.residual_var = 0.0;
      out.v << out.sensitivity * out.sensitivity * var_b, out.sensitivity * var_b,
          out.sensitivity * var_b, var_b;
    } else {
      out.x << out.offset, 0.0;
    }
    return out;
  }

  const double beta = s.sensitivity;
  const double q = s.residual_var;
  const double p22 = s.v(1, 1);
  // Record increment given the field error: beta dt e_B + (u dt + r dW),
  // where u is the part of the Jz error not explained by e_B.
  const double sigma2 = q * dt * dt + r * r * dt;
  const double innov_var = beta * beta * dt * dt * p22 + sigma2;
  const double k1 = dt * (beta * (beta + phi) * p22 + q + g * r) / innov_var;
  const double k2 = dt * beta * p22 / innov_var;
  const double innov = d_xi - s.x(0) * dt;
  out.x(0) = s.x(0) + phi * s.x(1) + k1 * innov;
  out.x(1) = s.x(1) + k2 * innov;

  const double v22 = p22 * (sigma2 / innov_var);  // ratio <= 1 keeps V22 monotone in rounding
  out.sensitivity = beta + phi - beta * dt * (q + g * r) / (q * dt + r * r);
  out.residual_var = q * (r - g * dt) * (r - g * dt) / (q * dt + r * r);
  out.v << out.sensitivity * out.sensitivity * v22 + out.residual_var, out.sensitivity * v22,
      out.sensitivity * v22, v22;

  if (!covariance_is_psd(out.v)) {
    std::ostringstream os;
    os << "Kalman covariance lost positive semidefiniteness at t = " << out.t
       << " (dt = " << dt << " too large?)";
    throw NumericError(os.str());
  }
  return out;
}

std::vector<KalmanState> run_filter(const TrajectoryRecord& record, const PhysicalParams& p) {
  std::vector<KalmanState> trace;
  trace.reserve(record.grid.size());
  trace.push_back(kalman_init(p));
  for (std::size_t k = 0; k < record.grid.n_steps(); ++k) {
    const auto step = interval_coefficients(p, record.grid.t(k), record.grid.dt(k));
    trace.push_back(kalman_step(trace.back(), step, record.d_xi[k]));
  }
  return trace;
}

// ---------------------------------------------------------------------------

namespace {

// Denominator of the closed form as a function of s = Mt and k = 2 eta J:
//   f(s) = -(k(s+4)+1) e^{-s} + 2(2k+1) 2 e^{-s/2} + s + k(s-4) - 3
// Its Taylor coefficients vanish through s^2, so for small s it is summed as
//   f(s) = sum_{n>=3} (-1)^n / n! [k(n - 4 + 2^{3-n}) + 2^{2-n} - 1] s^n.
double threshold_denominator(double s, double k) {
  if (s >= 1.0) {
    const double a = -(k * (s + 4.0) + 1.0);
    const double b = s + k * (s - 4.0) - 3.0;
    return a * std::exp(-s) + 4.0 * std::exp(-0.5 * s) * (2.0 * k + 1.0) + b;
  }
  double sum = 0.0;
  double power_over_fact = s * s / 2.0;  // s^n / n! at n = 2
  double sign = 1.0;
  for (int n = 3; n < 200; ++n) {
    power_over_fact *= s / n;
    sign = -sign;
    const double two_pow = std::ldexp(1.0, 3 - n);  // 2^{3-n}
    const double coeff = k * (n - 4.0 + two_pow) + (0.5 * two_pow - 1.0);
    const double term = sign * coeff * power_over_fact;
    sum += term;
    if (n > 4 && std::abs(term) <= 1e-18 * std::abs(sum)) break;
  }
  return sum;
}

}  // namespace

double riccati_analytic(const PhysicalParams& p, double t) {
  if (!(t > 0.0)) throw ParamError({"t: closed-form threshold needs t > 0"});
  const double s = p.meas_strength * t;
  const double k = 2.0 * p.efficiency * p.j_total;
  const double den = threshold_denominator(s, k);
  if (!(den > 0.0)) {
    std::ostringstream os;
    os << "closed-form threshold denominator is " << den << " at t = " << t
       << "; outside its validity window";
    throw NumericError(os.str());
  }
  const double num = 1.0 + k * s;
  return p.meas_strength / (4.0 * p.gamma * p.j_total) * std::sqrt(num / den);
}

double detection_threshold_asymptotic(const PhysicalParams& p, double t) {
  if (!(t > 0.0)) throw ParamError({"t: threshold needs t > 0"});
  if (t <= 10.0 / (p.j_total * p.meas_strength)) {
    std::ostringstream os;
    os << "asymptotic threshold used at t = " << t << " <= 10/(JM); it assumes t >> 1/(JM)";
    warn(os.str());
  }
  return std::sqrt(3.0 / (p.meas_strength * p.efficiency * t * t * t)) / (p.gamma * p.j_total);
}

double shotnoise_limit(const PhysicalParams& p, double t_tot) {
  if (!(t_tot > 0.0)) throw ParamError({"t_tot: must be positive"});
  return 1.0 / (p.gamma * std::sqrt(p.j_total * t2_bound(p) * t_tot));
}

std::string_view to_string(ThresholdSource s) {
  switch (s) {
    case ThresholdSource::riccati_numeric: return "riccati_numeric";
    case ThresholdSource::riccati_analytic: return "riccati_analytic";
    case ThresholdSource::asymptotic: return "asymptotic";
    case ThresholdSource::shotnoise: return "shotnoise";
  }
  return "unknown";
}

ThresholdCurve threshold_curve(const PhysicalParams& p, std::span<const double> times,
                               ThresholdSource source) {
  ThresholdCurve curve;
  curve.source = source;
  curve.times.assign(times.begin(), times.end());
  curve.delta_b.reserve(times.size());
  switch (source) {
    case ThresholdSource::riccati_numeric: {
      const auto sol = riccati_integrate(p, times);
      for (const auto& v : sol.v) curve.delta_b.push_back(std::sqrt(v(1, 1)));
      break;
    }
    case ThresholdSource::riccati_analytic:
      for (double t : times) curve.delta_b.push_back(riccati_analytic(p, t));
      break;
    case ThresholdSource::asymptotic: {
      WarningCapture quiet;  // the whole curve is requested knowingly
      for (double t : times) curve.delta_b.push_back(detection_threshold_asymptotic(p, t));
      break;
    }
    case ThresholdSource::shotnoise:
      for (double t : times) curve.delta_b.push_back(shotnoise_limit(p, t));
      break;
  }
  return curve;
}

// ---------------------------------------------------------------------------

std::string_view to_string(RegressionAbscissa a) {
  return a == RegressionAbscissa::decay_compensated ? "decay_compensated" : "elapsed_time";
}

double regression_abscissa(const PhysicalParams& p, double t, RegressionAbscissa a) {
  if (a == RegressionAbscissa::elapsed_time) return t;
  const double half_m = 0.5 * p.meas_strength;
  return -std::expm1(-half_m * t) / half_m;
}

double regression_estimate(const TrajectoryRecord& record, const PhysicalParams& p, double t_end,
                           RegressionAbscissa abscissa) {
  if (t_end > record.grid.t_total() * (1.0 + 1e-12))
    throw ParamError({"t_end: beyond the end of the record"});
  if (abscissa == RegressionAbscissa::elapsed_time && p.meas_strength * t_end > 0.5) {
    std::ostringstream os;
    os << "M * t_end = " << p.meas_strength * t_end
       << " > 0.5; the straight-line fit assumes the Bloch vector has not decayed";
    warn(os.str());
  }
  RegressionAccumulator acc;
  for (std::size_t k = 0; k < record.grid.n_steps(); ++k) {
    if (record.grid.t(k + 1) > t_end * (1.0 + 1e-12)) break;
    const double dt = record.grid.dt(k);
    acc.add(regression_abscissa(p, record.grid.t(k), abscissa), dt, record.d_xi[k] / dt);
  }
  if (acc.count() < 3) throw ParamError({"t_end: regression needs at least 3 record points"});
  return acc.slope() / (p.gamma * p.j_total);
}

}  // namespace qkfmag
