#pragma once

#include <Eigen/Dense>

#include "knockoff/errors.hpp"
#include "knockoff/linalg.hpp"

namespace knockoff {

/// Validated correlation-scale covariance model.
///
/// Construction symmetrizes the input, rescales it to unit diagonal, and
/// caches the minimum eigenvalue plus (when positive definite) the lower
/// Cholesky factor. The plain constructor leaves the spectrum untouched so
/// degenerate inputs stay detectable; `regularized` additionally floors the
/// minimum eigenvalue at 1e-3 (adding (1e-3 - lambda_min) I and rescaling),
/// which is the construction used for estimated or randomly generated
/// covariances.
class CovModel {
 public:
  explicit CovModel(const Eigen::MatrixXd& m);

  /// Eigenvalue-floored construction for covariances built from data.
  static CovModel regularized(const Eigen::MatrixXd& m);

  int dim() const { return static_cast<int>(sigma_.rows()); }
  const Eigen::MatrixXd& matrix() const { return sigma_; }
  double operator()(int i, int j) const { return sigma_(i, j); }

  double min_eigenvalue() const { return min_eig_; }
  bool positive_definite() const { return pd_; }

  /// Lower Cholesky factor; throws DegenerateCovariance if not PD.
  const Eigen::MatrixXd& cholesky_factor() const;

  /// Solve Sigma X = B through the cached factor.
  Eigen::MatrixXd solve(const Eigen::MatrixXd& b) const;

 private:
  Eigen::MatrixXd sigma_;
  Eigen::MatrixXd chol_;
  double min_eig_ = 0.0;
  bool pd_ = false;
};

}  // namespace knockoff
