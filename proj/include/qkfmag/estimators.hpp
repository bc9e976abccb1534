#pragma once

// Quantum Kalman filter for (Jz, B), its covariance (numerical Riccati flow
// and closed form), the large-t detection threshold, the shotnoise reference
// and the linear-regression baseline.

#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "qkfmag/core.hpp"
#include "qkfmag/dynamics.hpp"

namespace qkfmag {

/// Continuous-time filter matrices at time t.
struct SystemMatrices {
  Eigen::Matrix2d a;       // gamma J e^{-Mt/2} in (0,1), zero elsewhere
  Eigen::Vector2d b;       // (<dJz^2>(t), 0)
  Eigen::RowVector2d c;    // (1, 0)
  double d = 0.0;          // 1 / (2 sqrt(M eta))
};

SystemMatrices system_matrices(const PhysicalParams& p, double t);

/// G = D^-2 (B + V C^T)
Eigen::Vector2d kalman_gain(const Eigen::Matrix2d& v, const SystemMatrices& mats);

struct KalmanState {
  double t = 0.0;
  Eigen::Vector2d x = Eigen::Vector2d::Zero();  // (Jz estimate, B estimate in G)
  Eigen::Matrix2d v = Eigen::Matrix2d::Zero();

  // V is held factored: V12 = sensitivity * V22 and
  // V11 = sensitivity^2 * V22 + residual_var. The factors are updated
  // directly so that V22 never comes out of a near-cancelling subtraction.
  double sensitivity = 0.0;   // regression of the Jz error on the B error
  double residual_var = 0.0;  // V11 - V12^2 / V22, Jz^2

  // While set, the field block carries no information yet (infinite prior)
  // and the state lives in the affine form mean_jz = offset + sensitivity * B.
  bool info_form = false;
  double offset = 0.0;
  double information = 0.0;  // 1 / var(B), G^-2
  double score = 0.0;

  double jz_tilde() const { return x(0); }
  double b_tilde() const { return x(1); }
  /// Posterior field variance; +inf while info_form.
  double b_variance() const;
};

KalmanState kalman_init(const PhysicalParams& p);

/// Covariance-form state from an explicit mean and PSD covariance.
KalmanState kalman_state_from(double t, const Eigen::Vector2d& x, const Eigen::Matrix2d& v);

/// One filter step over `step`, consuming the record increment for that step.
/// This is the exact one-step predictor for the discretized model (the same
/// dW drives the state and the record); algebraically the Joseph-form update,
/// carried out on the factored covariance. As dt -> 0 its gain/dt is
/// D^-2 (B + V C^T). Throws NumericError if V stops being PSD.
KalmanState kalman_step(const KalmanState& s, const IntervalCoefficients& step, double d_xi);

/// Filter state at every grid point of the record.
std::vector<KalmanState> run_filter(const TrajectoryRecord& record, const PhysicalParams& p);

/// Min eigenvalue of V relative to its trace must stay above -1e-12.
bool covariance_is_psd(const Eigen::Matrix2d& v, double rel_tol = 1e-12);

// --- Riccati --------------------------------------------------------------

struct RiccatiSolution {
  std::vector<double> times;
  std::vector<Eigen::Matrix2d> v;
};

/// Integrates dV/dt = (A - D^-2 B C) V + V (A - D^-2 B C)^T - D^-2 V C^T C V
/// from V(0) = diag(0, prior) and reports V at `times` (sorted, >= 0).
/// Independent of B.
RiccatiSolution riccati_integrate(const PhysicalParams& p, std::span<const double> times,
                                  double rel_tol = 1e-11);

/// Closed-form infinite-prior threshold sqrt(V22(t)) in G. Throws NumericError
/// when the denominator under the radical is not positive.
double riccati_analytic(const PhysicalParams& p, double t);

/// (1 / gamma J) sqrt(3 / (M eta t^3)); warns for t <= 10/(JM).
double detection_threshold_asymptotic(const PhysicalParams& p, double t);

/// 1 / (gamma sqrt(J T2 t)) with T2 = 2/M.
double shotnoise_limit(const PhysicalParams& p, double t_tot);

enum class ThresholdSource { riccati_numeric, riccati_analytic, asymptotic, shotnoise };
std::string_view to_string(ThresholdSource s);

struct ThresholdCurve {
  std::vector<double> times;
  std::vector<double> delta_b;
  ThresholdSource source = ThresholdSource::riccati_numeric;
};

ThresholdCurve threshold_curve(const PhysicalParams& p, std::span<const double> times,
                               ThresholdSource source);

// --- Regression -----------------------------------------------------------

enum class RegressionAbscissa {
  /// tau(t) = (2/M)(1 - e^{-Mt/2}); the drift is exactly linear in tau.
  decay_compensated,
  /// plain elapsed time; only valid while Mt << 1.
  elapsed_time,
};

std::string_view to_string(RegressionAbscissa a);
double regression_abscissa(const PhysicalParams& p, double t, RegressionAbscissa a);

/// Running weighted least-squares line fit (weights = step durations).
class RegressionAccumulator {
public:
  void add(double x, double weight, double value) noexcept {
    sum_w_ += weight;
    const double dx = x - mean_x_;
    const double r = weight / sum_w_;
    mean_x_ += r * dx;
    const double dy = value - mean_y_;
    mean_y_ += r * dy;
    cxx_ += weight * dx * (x - mean_x_);
    cxy_ += weight * dx * (value - mean_y_);
    ++count_;
  }
  std::size_t count() const noexcept { return count_; }
  double slope() const noexcept { return cxy_ / cxx_; }
  double intercept() const noexcept { return mean_y_ - slope() * mean_x_; }

private:
  std::size_t count_ = 0;
  double sum_w_ = 0.0;
  double mean_x_ = 0.0;
  double mean_y_ = 0.0;
  double cxx_ = 0.0;
  double cxy_ = 0.0;
};

/// Field estimate from the slope of a line fit to the record rate d_xi/dt over
/// the steps inside [0, t_end]: b = slope / (gamma J).
double regression_estimate(const TrajectoryRecord& record, const PhysicalParams& p, double t_end,
                           RegressionAbscissa abscissa = RegressionAbscissa::decay_compensated);

}  // namespace qkfmag
