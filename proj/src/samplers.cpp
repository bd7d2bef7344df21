#include "knockoff/samplers.hpp"

#include <cmath>

namespace knockoff {

namespace {

void check_sampler_inputs(const Eigen::MatrixXd& x, const CovModel& sigma, const SMatrix& s,
                          const char* who) {
  if (x.cols() != sigma.dim() || x.rows() < 1) {
    throw InvalidParams(std::string(who) + ": design and covariance dimensions differ");
  }
  if (s.s.size() != sigma.dim() || s.sigma_dim != sigma.dim()) {
    throw InvalidParams(std::string(who) + ": S-matrix dimension does not match");
  }
  if (s.s.minCoeff() < 0.0) {
    throw InfeasibleS(std::string(who) + ": s has negative entries");
  }
}

/// Factor of the conditional knockoff covariance V = 2S - S Sigma^-1 S:
/// returns C with C C' = V via symmetric eigendecomposition, clipping
/// negative eigenvalues at zero. Throws InfeasibleS when an eigenvalue
/// is below -1e-8 (s outside the feasible set rather than roundoff).
Eigen::MatrixXd conditional_cov_factor(const CovModel& sigma, const SMatrix& s,
                                       Eigen::MatrixXd& sigma_inv_s) {
  const int p = sigma.dim();
  sigma_inv_s = sigma.solve(Eigen::MatrixXd(s.s.asDiagonal()));
  Eigen::MatrixXd v = -(s.s.asDiagonal() * sigma_inv_s);
  v.diagonal() += 2.0 * s.s;
  v = 0.5 * (v + v.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(v);
  if (eig.info() != Eigen::Success) {
    throw ConvergenceFailure("conditional covariance eigendecomposition failed");
  }
  Eigen::VectorXd lambda = eig.eigenvalues();
  for (int i = 0; i < p; ++i) {
    if (lambda(i) < -1e-8) {
      throw InfeasibleS("conditional knockoff covariance has an eigenvalue below -1e-8");
    }
    lambda(i) = std::max(lambda(i), 0.0);
  }
  return eig.eigenvectors() * lambda.array().sqrt().matrix().asDiagonal();
}

/// Fill a matrix with standard normals, row-major order, so the draw
/// sequence is independent of how the matrix is stored.
Eigen::MatrixXd normal_matrix(int rows, int cols, RngStream& rng) {
  Eigen::MatrixXd z(rows, cols);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) {
      z(i, j) = rng.normal();
    }
  }
  return z;
}

KnockoffDataset conditional_gaussian_knockoffs(const Eigen::MatrixXd& x, const CovModel& sigma,
                                               const SMatrix& s, RngStream& rng,
                                               KnockoffKind kind) {
  Eigen::MatrixXd sigma_inv_s;
  const Eigen::MatrixXd c = conditional_cov_factor(sigma, s, sigma_inv_s);
  const int n = static_cast<int>(x.rows());
  const int p = sigma.dim();
  // Row-wise conditional mean x_i' (I - Sigma^-1 S).
  Eigen::MatrixXd mean = x - x * sigma_inv_s;
  Eigen::MatrixXd z = normal_matrix(n, p, rng);
  KnockoffDataset ds;
  ds.x = x;
  ds.x_knock = mean + z * c.transpose();
  ds.kind = kind;
  ds.s_used = s;
  return ds;
}

}  // namespace

KnockoffDataset sample_gaussian_mx(const Eigen::MatrixXd& x, const CovModel& sigma,
                                   const SMatrix& s, RngStream& rng) {
  check_sampler_inputs(x, sigma, s, "sample_gaussian_mx");
  return conditional_gaussian_knockoffs(x, sigma, s, rng, KnockoffKind::model_x);
}

KnockoffDataset sample_second_order(const Eigen::MatrixXd& x, const CovModel& sigma_hat,
                                    const SMatrix& s, RngStream& rng) {
  check_sampler_inputs(x, sigma_hat, s, "sample_second_order");
  const Eigen::MatrixXd centered = x.rowwise() - x.colwise().mean();
  KnockoffDataset ds =
      conditional_gaussian_knockoffs(centered, sigma_hat, s, rng, KnockoffKind::second_order);
  return ds;
}

KnockoffDataset construct_fixed_x(const Eigen::MatrixXd& x, const SMatrix& s, RngStream& rng) {
  const int n = static_cast<int>(x.rows());
  const int p = static_cast<int>(x.cols());
  if (n < 2 * p) {
    throw InsufficientRows("construct_fixed_x: needs at least 2p rows");
  }
  // Normalize columns to unit length so the Gram matrix is correlation-scale.
  Eigen::MatrixXd xs = x;
  for (int j = 0; j < p; ++j) {
    const double norm = xs.col(j).norm();
    if (!(norm > 0.0)) {
      throw RankDeficientX("construct_fixed_x: zero column");
    }
    xs.col(j) /= norm;
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(xs);
  if (qr.rank() < p) {
    throw RankDeficientX("construct_fixed_x: design does not have full column rank");
  }
  const CovModel gram(xs.transpose() * xs);
  if (s.s.size() != p || s.sigma_dim != p) {
    throw InvalidParams("construct_fixed_x: S-matrix dimension does not match");
  }
  if (s.s.minCoeff() < 0.0) {
    throw InfeasibleS("construct_fixed_x: s has negative entries");
  }

  Eigen::MatrixXd sigma_inv_s;
  // C with C C' = 2S - S Sigma^-1 S via the symmetric eigendecomposition.
  const Eigen::MatrixXd c_left = conditional_cov_factor(gram, s, sigma_inv_s);

  // Orthonormal basis of a p-dimensional subspace orthogonal to col(X):
  // draw n-vectors, project out col(X), and orthonormalize (twice, for
  // numerical orthogonality).
  const Eigen::MatrixXd q1 = qr.householderQ() * Eigen::MatrixXd::Identity(n, p);
  Eigen::MatrixXd u = normal_matrix(n, p, rng);
  u -= q1 * (q1.transpose() * u).eval();
  Eigen::HouseholderQR<Eigen::MatrixXd> uqr(u);
  Eigen::MatrixXd ub = uqr.householderQ() * Eigen::MatrixXd::Identity(n, p);
  ub -= q1 * (q1.transpose() * ub).eval();
  const Eigen::HouseholderQR<Eigen::MatrixXd> uqr2(ub);
  ub = uqr2.householderQ() * Eigen::MatrixXd::Identity(n, p);

  KnockoffDataset ds;
  ds.x = xs;
  ds.x_knock = xs - xs * sigma_inv_s + ub * c_left.transpose();
  ds.kind = KnockoffKind::fixed_x;
  ds.s_used = s;
  return ds;
}

KnockoffDataset construct_fixed_x(const Eigen::MatrixXd& x, const SMatrix& s) {
  RngStream rng(0, 0);
  return construct_fixed_x(x, s, rng);
}

KnockoffDataset swap_columns(const KnockoffDataset& ds, const std::vector<int>& swap_set) {
  const int p = static_cast<int>(ds.x.cols());
  KnockoffDataset out = ds;
  for (int j : swap_set) {
    if (j < 0 || j >= p) {
      throw IndexOutOfRange("swap_columns: index outside [0, p)");
    }
    out.x.col(j).swap(out.x_knock.col(j));
  }
  return out;
}

}  // namespace knockoff
