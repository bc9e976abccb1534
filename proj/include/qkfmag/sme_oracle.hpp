#pragma once

// Brute-force stochastic master equation on the (2J+1)-dimensional spin space
// for small J. Used to check the Gaussian model pathwise with matched noise.

#include <vector>

#include <Eigen/Core>

#include "qkfmag/core.hpp"

namespace qkfmag {

using ComplexMatrix = Eigen::MatrixXcd;

/// Basis ordered m = J, J-1, ..., -J.
struct SpinOperators {
  double j = 0.0;
  int dim = 0;
  ComplexMatrix jx, jy, jz;
};

SpinOperators build_spin_operators(double j);

struct DensityMatrix {
  ComplexMatrix rho;
};

/// |J>_x <J|: the top eigenvector of jx.
DensityMatrix coherent_spin_state_x(const SpinOperators& ops);

/// Basis projector |m><m|.
DensityMatrix jz_eigenstate(const SpinOperators& ops, double m);

/// Raw Euler-Maruyama increment of
///   d rho = -i[H, rho] dt + M D[Jz] rho dt + sqrt(M eta) H[Jz] rho dW
/// with H = -gamma B Jy (so that d<Jz> = +gamma B <Jx> dt).
ComplexMatrix sme_increment(const DensityMatrix& rho, const SpinOperators& ops,
                            const PhysicalParams& p, double dt, double dW);

/// One step: exact dephasing for the unread fraction (1 - eta), a Kraus
/// operator for the monitored part, then Hermitize and renormalize the trace. Matches rho + sme_increment to first
/// order in dt. Throws NumericError if the result is no longer positive
/// within 1e-8.
DensityMatrix sme_step(const DensityMatrix& rho, const SpinOperators& ops, const PhysicalParams& p,
                       double dt, double dW);

struct Moments {
  double mean = 0.0;
  double variance = 0.0;
};

Moments oracle_moments(const DensityMatrix& rho, const SpinOperators& ops);

struct DensityDiagnostics {
  double hermiticity_error = 0.0;  // max |rho - rho^dagger|
  double trace_error = 0.0;        // |tr rho - 1|
  double min_eigenvalue = 0.0;
};

DensityDiagnostics diagnose(const DensityMatrix& rho);

/// dt <= 1 / (100 M (2J+1)^2)
double sme_dt_bound(const PhysicalParams& p);

/// True when 2j is a non-negative integer.
bool is_half_integer(double j);

/// Throws ParamError unless p is valid and J is a half-integer <= 50.
void validate_oracle_params(const PhysicalParams& p);

struct Deviation {
  double t = 0.0;
  double d_mean = 0.0;
  double d_var = 0.0;
};

struct OracleComparison {
  std::vector<Deviation> series;
  double max_d_mean = 0.0;
  double max_d_var = 0.0;
  double min_eigenvalue = 0.0;  // smallest eigenvalue seen on the SME path
};

/// Pass thresholds for compare_to_gaussian: max |d_mean| <= 0.05 sqrt(J/2),
/// max |d_var| <= 0.1 (J/2).
double mean_deviation_threshold(double j);
double variance_deviation_threshold(double j);
bool within_thresholds(const OracleComparison& c, double j);

/// Runs the Gaussian model and the SME on the same dW sequence. Requires a
/// half-integer J <= 50 and a grid satisfying sme_dt_bound.
OracleComparison compare_to_gaussian(const PhysicalParams& p, const TimeGrid& grid, SeedSpec seed);

struct DephasingCheck {
  double max_rate_error = 0.0;  // relative, over all resolvable off-diagonals
  int pairs_checked = 0;
};

/// eta = 0, B = 0 evolution of the x-polarized coherent state; compares the
/// decay rate of each |rho_{m m'}| with M (m - m')^2 / 2.
DephasingCheck dephasing_rate_check(double j, double meas_strength, double t_end);

}  // namespace qkfmag
