#include "qkfmag/sme_oracle.hpp"

#include <cmath>
#include <complex>
#include <sstream>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "qkfmag/dynamics.hpp"
#include "qkfmag/random.hpp"

namespace qkfmag {

namespace {

using cd = std::complex<double>;
constexpr cd kI{0.0, 1.0};

double m_of(const SpinOperators& ops, int i) { return ops.j - i; }

}  // namespace

bool is_half_integer(double j) {
  const double twice = 2.0 * j;
  return j >= 0.0 && std::abs(twice - std::round(twice)) < 1e-12;
}

SpinOperators build_spin_operators(double j) {
  if (!is_half_integer(j)) throw ParamError({"j: 2j must be a non-negative integer"});
  SpinOperators ops;
  ops.j = j;
  ops.dim = static_cast<int>(std::lround(2.0 * j)) + 1;
  const int d = ops.dim;
  ComplexMatrix raise = ComplexMatrix::Zero(d, d);
  ops.jz = ComplexMatrix::Zero(d, d);
  for (int i = 0; i < d; ++i) {
    const double m = j - i;
    ops.jz(i, i) = m;
    if (i > 0) raise(i - 1, i) = std::sqrt(j * (j + 1.0) - m * (m + 1.0));
  }
  const ComplexMatrix lower = raise.adjoint();
  ops.jx = 0.5 * (raise + lower);
  ops.jy = (raise - lower) / (2.0 * kI);
  return ops;
}

DensityMatrix coherent_spin_state_x(const SpinOperators& ops) {
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(ops.jx);
  const Eigen::VectorXcd top = es.eigenvectors().col(ops.dim - 1);
  return {top * top.adjoint()};
}

DensityMatrix jz_eigenstate(const SpinOperators& ops, double m) {
  const double idx = ops.j - m;
  if (std::abs(idx - std::round(idx)) > 1e-12 || idx < 0 || idx >= ops.dim)
    throw ParamError({"m: not an eigenvalue of jz"});
  DensityMatrix out{ComplexMatrix::Zero(ops.dim, ops.dim)};
  const auto i = static_cast<Eigen::Index>(std::lround(idx));
  out.rho(i, i) = 1.0;
  return out;
}

ComplexMatrix sme_increment(const DensityMatrix& state, const SpinOperators& ops,
                            const PhysicalParams& p, double dt, double dW) {
  const ComplexMatrix& rho = state.rho;
  const int d = ops.dim;
  double mean = 0.0;
  for (int i = 0; i < d; ++i) mean += m_of(ops, i) * rho(i, i).real();

  const double field = -p.gamma * p.b_true;  // H = field * Jy
  const double root = std::sqrt(p.meas_strength * p.efficiency);
  ComplexMatrix out(d, d);
  for (int b = 0; b < d; ++b) {
    const double mb = m_of(ops, b);
    for (int a = 0; a < d; ++a) {
      const double ma = m_of(ops, a);
      // Jy is tridiagonal in this basis
      cd hr = 0.0, rh = 0.0;
      if (a > 0) hr += ops.jy(a, a - 1) * rho(a - 1, b);
      if (a + 1 < d) hr += ops.jy(a, a + 1) * rho(a + 1, b);
      if (b > 0) rh += rho(a, b - 1) * ops.jy(b - 1, b);
      if (b + 1 < d) rh += rho(a, b + 1) * ops.jy(b + 1, b);
      const cd commutator = -kI * field * (hr - rh);
      const double dm = ma - mb;
      const cd dephase = -0.5 * dm * dm * rho(a, b);
      const cd innovation = (ma + mb - 2.0 * mean) * rho(a, b);
      out(a, b) = commutator * dt + p.meas_strength * dephase * dt + root * innovation * dW;
    }
  }
  return out;
}

DensityMatrix sme_step(const DensityMatrix& state, const SpinOperators& ops,
                       const PhysicalParams& p, double dt, double dW) {
  const ComplexMatrix& rho = state.rho;
  const int d = ops.dim;
  double mean = 0.0;
  for (int i = 0; i < d; ++i) mean += m_of(ops, i) * rho(i, i).real();

  // The unread fraction (1 - eta) of the dephasing is applied exactly; the
  // monitored part goes through a Kraus operator, so both stay positive.
  // Together they agree with rho + sme_increment to first order.
  const double unread = 0.5 * p.meas_strength * (1.0 - p.efficiency) * dt;
  ComplexMatrix dephased(d, d);
  for (int b = 0; b < d; ++b)
    for (int a = 0; a < d; ++a) {
      const double dm = m_of(ops, a) - m_of(ops, b);
      dephased(a, b) = rho(a, b) * std::exp(-unread * dm * dm);
    }

  const double rate = p.meas_strength * p.efficiency;
  const double root = std::sqrt(rate);
  const double dy = dW + 2.0 * root * mean * dt;
  ComplexMatrix k = (kI * p.gamma * p.b_true * dt) * ops.jy;
  for (int i = 0; i < d; ++i) {
    const double m = m_of(ops, i);
    k(i, i) += 1.0 - 0.5 * rate * m * m * dt + root * m * dy + 0.5 * rate * m * m * (dy * dy - dt);
  }
  ComplexMatrix next = k * dephased * k.adjoint();
  next = 0.5 * (next + next.adjoint()).eval();
  next /= next.trace().real();

  const ComplexMatrix shifted = next + 1e-8 * ComplexMatrix::Identity(d, d);
  Eigen::LLT<ComplexMatrix> llt(shifted);
  if (llt.info() != Eigen::Success) {
    std::ostringstream os;
    os << "density matrix lost positivity (dt = " << dt << " too large?)";
    throw NumericError(os.str());
  }
  return {std::move(next)};
}

Moments oracle_moments(const DensityMatrix& state, const SpinOperators& ops) {
  double mean = 0.0, second = 0.0;
  for (int i = 0; i < ops.dim; ++i) {
    const double m = m_of(ops, i);
    const double pi = state.rho(i, i).real();
    mean += m * pi;
    second += m * m * pi;
  }
  return {mean, second - mean * mean};
}

DensityDiagnostics diagnose(const DensityMatrix& state) {
  DensityDiagnostics d;
  d.hermiticity_error = (state.rho - state.rho.adjoint()).cwiseAbs().maxCoeff();
  d.trace_error = std::abs(state.rho.trace() - cd(1.0, 0.0));
  const ComplexMatrix herm = 0.5 * (state.rho + state.rho.adjoint());
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(herm, Eigen::EigenvaluesOnly);
  d.min_eigenvalue = es.eigenvalues().minCoeff();
  return d;
}

double sme_dt_bound(const PhysicalParams& p) {
  const double dim = 2.0 * p.j_total + 1.0;
  return 1.0 / (100.0 * p.meas_strength * dim * dim);
}

double mean_deviation_threshold(double j) { return 0.05 * std::sqrt(0.5 * j); }
double variance_deviation_threshold(double j) { return 0.1 * 0.5 * j; }

bool within_thresholds(const OracleComparison& c, double j) {
  return c.max_d_mean <= mean_deviation_threshold(j) &&
         c.max_d_var <= variance_deviation_threshold(j);
}

void validate_oracle_params(const PhysicalParams& p) {
  validate_params(p);
  if (!is_half_integer(p.j_total) || p.j_total > 50.0)
    throw ParamError({"j_total: oracle needs a half-integer J <= 50"});
}

OracleComparison compare_to_gaussian(const PhysicalParams& p, const TimeGrid& grid, SeedSpec seed) {
  validate_oracle_params(p);
  if (grid.max_dt() > sme_dt_bound(p) * (1.0 + 1e-9))
    throw ParamError({"grid: dt exceeds the SME stability bound 1/(100 M (2J+1)^2)"});

  const auto record = simulate_trajectory(p, grid, seed);
  const auto ops = build_spin_operators(p.j_total);
  DensityMatrix rho = coherent_spin_state_x(ops);

  OracleComparison out;
  out.series.reserve(grid.size());
  out.min_eigenvalue = diagnose(rho).min_eigenvalue;
  for (std::size_t k = 0; k <= grid.n_steps(); ++k) {
    if (k > 0) rho = sme_step(rho, ops, p, grid.dt(k - 1), record.noise[k - 1]);
    const auto mom = oracle_moments(rho, ops);
    const auto& g = record.states[k];
    Deviation dev{grid.t(k), std::abs(mom.mean - g.mean_jz), std::abs(mom.variance - g.var_jz)};
    out.max_d_mean = std::max(out.max_d_mean, dev.d_mean);
    out.max_d_var = std::max(out.max_d_var, dev.d_var);
    out.series.push_back(dev);
  }
  out.min_eigenvalue = std::min(out.min_eigenvalue, diagnose(rho).min_eigenvalue);
  return out;
}

DephasingCheck dephasing_rate_check(double j, double meas_strength, double t_end) {
  PhysicalParams p;
  p.j_total = j;
  p.gamma = 1.0;
  p.b_true = 0.0;
  p.meas_strength = meas_strength;
  p.efficiency = 0.0;
  p.t_total = t_end;
  const auto grid = TimeGrid::uniform(t_end, sme_dt_bound(p));
  const auto ops = build_spin_operators(j);
  const DensityMatrix initial = coherent_spin_state_x(ops);
  DensityMatrix rho = initial;
  for (std::size_t k = 0; k < grid.n_steps(); ++k) rho = sme_step(rho, ops, p, grid.dt(k), 0.0);

  DephasingCheck out;
  for (int a = 0; a < ops.dim; ++a) {
    for (int b = 0; b < ops.dim; ++b) {
      if (a == b) continue;
      const double r0 = std::abs(initial.rho(a, b));
      const double r1 = std::abs(rho.rho(a, b));
      if (r0 < 1e-6 || r1 < 1e-12) continue;
      const double dm = a - b;
      const double expected = 0.5 * meas_strength * dm * dm;
      const double measured = -std::log(r1 / r0) / t_end;
      out.max_rate_error = std::max(out.max_rate_error, std::abs(measured / expected - 1.0));
      ++out.pairs_checked;
    }
  }
  return out;
}

}  // namespace qkfmag
