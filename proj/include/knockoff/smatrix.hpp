#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

#include "knockoff/covariance.hpp"
#include "knockoff/errors.hpp"

namespace knockoff {

/// Knobs shared by the coordinate-descent S-matrix solvers.
struct SolverOptions {
  /// Maximum number of full coordinate sweeps.
  int n_iter = 50;
  /// Stop when the largest per-coordinate move in a sweep falls below this.
  double converge_tol = 1e-5;
  /// Fraction of the feasible interval kept away from the PSD boundary
  /// by the boundary-seeking solvers (equicorrelated, SDP).
  double slack = 1e-5;
  /// Optional diagnostics hook, called with the working s vector after
  /// every single-coordinate update.
  std::function<void(const Eigen::VectorXd&)> on_coordinate_step;

  void validate() const {
    if (n_iter < 1) throw InvalidParams("SolverOptions: n_iter must be positive");
    if (!(converge_tol > 0.0)) throw InvalidParams("SolverOptions: converge_tol must be positive");
    if (slack < 0.0 || slack >= 1.0) throw InvalidParams("SolverOptions: slack must lie in [0, 1)");
  }
};

/// Diagonal S-matrix paired with a covariance of matching dimension:
/// the feature-knockoff joint covariance [[Sigma, Sigma-S], [Sigma-S, Sigma]]
/// is positive semidefinite exactly when diag(s) <= 2 Sigma.
struct SMatrix {
  Eigen::VectorXd s;
  int sigma_dim = 0;
  double slack = 0.0;
};

/// The three objective values used to compare S-matrix constructions.
struct LossReport {
  double mvr = 0.0;     ///< trace of the inverse joint covariance
  double maxent = 0.0;  ///< negative log-determinant of the joint covariance
  double mac = 0.0;     ///< mean absolute deviation of s from 1
};

enum class SMatrixMethod { mvr, maxent, sdp, equicorrelated };

/// Constant-s construction: s_j = min(2 lambda_min(Sigma), 1) * (1 - slack).
SMatrix solve_equicorrelated(const CovModel& sigma, const SolverOptions& opts = {});

/// Coordinate ascent for the mean-absolute-correlation objective
/// (minimize sum |1 - s_j| subject to joint-covariance feasibility).
/// Each pass pushes s_j to min(1, boundary * (1 - slack)) where the
/// boundary is the Schur-complement feasibility limit for coordinate j.
SMatrix solve_sdp(const CovModel& sigma, const SolverOptions& opts = {});

/// Coordinate descent for the trace-inverse (minimum variance-based
/// reconstructability) objective, maintaining a Cholesky factor of
/// 2 Sigma - diag(s) with rank-one updates per coordinate step.
SMatrix solve_mvr(const CovModel& sigma, const SolverOptions& opts = {});

/// Single-coordinate optimum for the trace-inverse objective: the unique
/// root of (-c_n - c_d^2) d^2 + 2(-c_n s_jj + c_d) d + (-c_n s_jj^2 - 1)
/// inside the open feasible interval (-s_jj, 1/c_d).
double mvr_coordinate_root(double c_n, double c_d, double s_jj);

/// Coordinate descent for the log-determinant (maximum entropy) objective;
/// the exact coordinate update is s_j = (2 Sigma_jj - c_m) / 2 with c_m the
/// Schur complement of the remaining coordinates.
SMatrix solve_maxent(const CovModel& sigma, const SolverOptions& opts = {});

/// Multiply s by gamma in [0, 1]; feasibility is preserved because the
/// feasible set is convex and contains the origin.
SMatrix scale_smatrix(const SMatrix& s, double gamma);

/// Solve each diagonal block independently and concatenate. For separable
/// objectives this matches the direct solve on the assembled block-diagonal
/// covariance.
SMatrix solve_blockdiag(const std::vector<CovModel>& blocks, SMatrixMethod method,
                        const SolverOptions& opts = {});

/// Two-step approximation for large problems: solve a block-diagonal
/// restriction of Sigma (contiguous blocks given by block_sizes), then pick
/// the loss-minimizing feasible scaling gamma on a uniform grid of at least
/// 101 points in [0, 1]. Supported for the mvr and maxent objectives.
SMatrix approx_then_linesearch(const CovModel& sigma, const std::vector<int>& block_sizes,
                               SMatrixMethod method, const SolverOptions& opts = {});

/// Evaluate the three losses for a given (Sigma, s) pair.
LossReport loss_report(const CovModel& sigma, const SMatrix& s);

enum class CovEstimator { mle, ledoit_wolf };

/// Covariance estimation from data rows: maximum likelihood (divisor n)
/// or Ledoit-Wolf shrinkage toward a scaled identity with the closed-form
/// intensity. The result is symmetrized, rescaled to unit diagonal, and
/// eigenvalue-floored.
CovModel estimate_covariance(const Eigen::MatrixXd& x, CovEstimator method);

/// Dispatch on method.
SMatrix solve_smatrix(const CovModel& sigma, SMatrixMethod method, const SolverOptions& opts = {});

}  // namespace knockoff
