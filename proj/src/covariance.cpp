#include "knockoff/covariance.hpp"

#include <cmath>

namespace knockoff {

namespace {

Eigen::MatrixXd to_correlation_scale(const Eigen::MatrixXd& m) {
  if (m.rows() != m.cols() || m.rows() < 1) {
    throw InvalidParams("CovModel requires a square matrix of dimension >= 1");
  }
  if (!m.allFinite()) {
    throw InvalidParams("CovModel requires finite entries");
  }
  Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
  Eigen::VectorXd d = sym.diagonal();
  for (int i = 0; i < d.size(); ++i) {
    if (!(d(i) > 0.0)) {
      throw DegenerateCovariance("CovModel requires strictly positive diagonal entries");
    }
  }
  const Eigen::VectorXd inv_sqrt = d.array().sqrt().inverse();
  Eigen::MatrixXd corr = inv_sqrt.asDiagonal() * sym * inv_sqrt.asDiagonal();
  corr.diagonal().setOnes();  // remove rounding residue on the diagonal
  return corr;
}

}  // namespace

CovModel::CovModel(const Eigen::MatrixXd& m) {
  sigma_ = to_correlation_scale(m);
  min_eig_ = detail::min_eig_bisect(sigma_);
  Eigen::MatrixXd f = sigma_;
  pd_ = detail::chol_in_place(f, 0.0);
  if (pd_) {
    f.triangularView<Eigen::StrictlyUpper>().setZero();
    chol_ = std::move(f);
  }
}

CovModel CovModel::regularized(const Eigen::MatrixXd& m) {
  Eigen::MatrixXd corr = to_correlation_scale(m);
  const double min_eig = detail::min_eig_bisect(corr);
  if (min_eig < 1e-3) {
    corr.diagonal().array() += 1e-3 - min_eig;
    corr = to_correlation_scale(corr);
  }
  return CovModel(corr);
}

const Eigen::MatrixXd& CovModel::cholesky_factor() const {
  if (!pd_) {
    throw DegenerateCovariance("covariance is not positive definite");
  }
  return chol_;
}

Eigen::MatrixXd CovModel::solve(const Eigen::MatrixXd& b) const {
  const Eigen::MatrixXd& l = cholesky_factor();
  Eigen::MatrixXd x = b;
  for (int c = 0; c < x.cols(); ++c) {
    Eigen::VectorXd col = x.col(c);
    detail::solve_lower_in_place(l, col);
    detail::solve_upper_in_place(l, col);
    x.col(c) = col;
  }
  return x;
}

}  // namespace knockoff
