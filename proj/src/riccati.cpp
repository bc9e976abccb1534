#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <vector>

#include <Eigen/LU>
#include <boost/numeric/odeint.hpp>

#include "qkfmag/estimators.hpp"

namespace qkfmag {

namespace odeint = boost::numeric::odeint;

namespace {

using State = std::vector<double>;

// Componentwise relative error. A component that is exactly zero with zero
// slope carries no scale yet and is skipped for that step.
struct RelativeErrorChecker {
  using value_type = double;
  using algebra_type = odeint::range_algebra;
  using operations_type = odeint::default_operations;

  double rel_tol = 1e-11;

  template <class St, class Deriv, class Err, class Time>
  value_type error(algebra_type&, const St& x_old, const Deriv& dxdt_old, Err& x_err,
                   Time dt) const {
    double worst = 0.0;
    for (std::size_t i = 0; i < x_old.size(); ++i) {
      const double err = std::abs(x_err[i]);
      if (err == 0.0) continue;
      const double scale = std::abs(x_old[i]) + std::abs(dt) * std::abs(dxdt_old[i]);
      if (scale == 0.0) continue;
      worst = std::max(worst, err / (rel_tol * scale));
    }
    return worst;
  }
};

using Dopri = odeint::runge_kutta_dopri5<State>;
using Controlled = odeint::controlled_runge_kutta<Dopri, RelativeErrorChecker>;

struct Coefficients {
  double collapse;  // 2 eta M J
  double h;         // D^-2 = 4 M eta
  double gj;        // gamma J
  double half_m;

  double f11(double t) const { return -collapse / (1.0 + collapse * t); }
  double f12(double t) const { return gj * std::exp(-half_m * t); }
};

// V = X Y^{-1} with dX/dt = F X, dY/dt = H X - F^T Y. Layout: X row-major in
// [0,4), Y row-major in [4,8).
struct LinearForm {
  Coefficients c;
  void operator()(const State& s, State& ds, double t) const {
    const double f11 = c.f11(t), f12 = c.f12(t);
    // F = [[f11, f12], [0, 0]]
    ds[0] = f11 * s[0] + f12 * s[2];
    ds[1] = f11 * s[1] + f12 * s[3];
    ds[2] = 0.0;
    ds[3] = 0.0;
    // H X = h * (row 0 of X ; 0); F^T Y = [[f11 y00, f11 y01], [f12 y00, f12 y01]]
    ds[4] = c.h * s[0] - f11 * s[4];
    ds[5] = c.h * s[1] - f11 * s[5];
    ds[6] = -f12 * s[4];
    ds[7] = -f12 * s[5];
  }
  static Eigen::Matrix2d covariance(const State& s) {
    Eigen::Matrix2d x, y;
    x << s[0], s[1], s[2], s[3];
    y << s[4], s[5], s[6], s[7];
    const double det = y.determinant();
    if (det == 0.0) {
      Eigen::Matrix2d v = Eigen::Matrix2d::Zero();
      v(1, 1) = std::numeric_limits<double>::infinity();
      return v;
    }
    Eigen::Matrix2d v = x * y.inverse();
    const double off = 0.5 * (v(0, 1) + v(1, 0));
    v(0, 1) = v(1, 0) = off;
    return v;
  }
};

// State (V11, V12, V22).
struct CovarianceForm {
  Coefficients c;
  void operator()(const State& s, State& ds, double t) const {
    const double f11 = c.f11(t), f12 = c.f12(t);
    ds[0] = 2.0 * (f11 * s[0] + f12 * s[1]) - c.h * s[0] * s[0];
    ds[1] = f11 * s[1] + f12 * s[2] - c.h * s[0] * s[1];
    ds[2] = -c.h * s[1] * s[1];
  }
  static Eigen::Matrix2d covariance(const State& s) {
    Eigen::Matrix2d v;
    v << s[0], s[1], s[1], s[2];
    return v;
  }
};

void check_psd(const Eigen::Matrix2d& v, double t) {
  if (std::isinf(v(1, 1))) return;
  if (!covariance_is_psd(v, 1e-9) || v(1, 1) < 0.0) {
    std::ostringstream os;
    os << "Riccati integration lost positivity at t = " << t;
    throw NumericError(os.str());
  }
}

template <class System>
void integrate_to(const System& sys, State& state, double t0, std::span<const double> outs,
                  double rel_tol, double dt_initial, std::vector<Eigen::Matrix2d>& sink) {
  std::vector<double> times;
  times.reserve(outs.size() + 1);
  times.push_back(t0);
  for (double t : outs)
    if (t > t0) times.push_back(t);
  std::size_t leading_equal = 0;
  for (double t : outs) {
    if (t > t0) break;
    ++leading_equal;
  }
  for (std::size_t i = 0; i < leading_equal; ++i) {
    sink.push_back(System::covariance(state));
    check_psd(sink.back(), t0);
  }
  if (times.size() < 2) return;

  Controlled stepper(RelativeErrorChecker{rel_tol});
  bool first = true;
  auto observer = [&](const State& s, double t) {
    if (first) {  // t0 itself, already reported above when requested
      first = false;
      return;
    }
    sink.push_back(System::covariance(s));
    check_psd(sink.back(), t);
  };
  odeint::integrate_times(stepper, sys, state, times.begin(), times.end(), dt_initial, observer);
}

}  // namespace

RiccatiSolution riccati_integrate(const PhysicalParams& p, std::span<const double> times,
                                  double rel_tol) {
  validate_params(p);
  if (!std::is_sorted(times.begin(), times.end()) || (!times.empty() && times.front() < 0.0))
    throw ParamError({"times: must be sorted and non-negative"});

  const Coefficients c{collapse_rate(p), 4.0 * p.meas_strength * p.efficiency,
                       p.gamma * p.j_total, 0.5 * p.meas_strength};
  RiccatiSolution sol;
  sol.times.assign(times.begin(), times.end());
  sol.v.reserve(times.size());
  const double dt_start = 1e-6 / c.collapse;

  if (!p.prior_b_variance.is_infinite()) {
    State s{0.0, 0.0, p.prior_b_variance.value()};
    integrate_to(CovarianceForm{c}, s, 0.0, times, rel_tol, dt_start, sol.v);
    return sol;
  }

  // Zero field-block information at t = 0: X(0) = diag(0,1), Y(0) = diag(1,0).
  const double t_switch = 100.0 / c.collapse;
  const auto split = static_cast<std::size_t>(
      std::lower_bound(times.begin(), times.end(), t_switch) - times.begin());
  State lin{0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0};
  integrate_to(LinearForm{c}, lin, 0.0, times.first(split), rel_tol, dt_start, sol.v);
  if (split == times.size()) return sol;

  const double t_from = split > 0 ? std::max(times[split - 1], 0.0) : 0.0;
  if (t_from < t_switch) {
    std::vector<Eigen::Matrix2d> discard;
    const double one[] = {t_switch};
    integrate_to(LinearForm{c}, lin, t_from, one, rel_tol, std::max(dt_start, 1e-6 * t_from), discard);
  }
  const auto v0 = LinearForm::covariance(lin);
  State cov{v0(0, 0), v0(0, 1), v0(1, 1)};
  integrate_to(CovarianceForm{c}, cov, t_switch, times.subspan(split), rel_tol, 1e-4 * t_switch, sol.v);
  return sol;
}

}  // namespace qkfmag
