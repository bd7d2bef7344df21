#pragma once

#include <Eigen/Dense>
#include <vector>

#include "knockoff/covariance.hpp"
#include "knockoff/rng.hpp"
#include "knockoff/smatrix.hpp"

namespace knockoff {

enum class KnockoffKind { model_x, second_order, fixed_x };

/// A design matrix paired with its knockoff copy, the construction kind,
/// and the S-matrix used to build it.
struct KnockoffDataset {
  Eigen::MatrixXd x;
  Eigen::MatrixXd x_knock;
  KnockoffKind kind = KnockoffKind::model_x;
  SMatrix s_used;
};

/// Exact Gaussian knockoffs: rows of x_knock are drawn from the conditional
/// law N(x (I - Sigma^-1 S), 2S - S Sigma^-1 S). The conditional covariance
/// is factored through a symmetric eigendecomposition with negative
/// eigenvalues clipped at zero, so s on the feasibility boundary (where the
/// conditional covariance is legitimately singular) still samples cleanly.
/// Throws InfeasibleS when an eigenvalue falls below -1e-8.
KnockoffDataset sample_gaussian_mx(const Eigen::MatrixXd& x, const CovModel& sigma,
                                   const SMatrix& s, RngStream& rng);

/// Second-order knockoffs: the same conditional-Gaussian construction run
/// against an estimated covariance, with the design centered by its column
/// means first. The returned dataset stores the centered design.
KnockoffDataset sample_second_order(const Eigen::MatrixXd& x, const CovModel& sigma_hat,
                                    const SMatrix& s, RngStream& rng);

/// Fixed-design knockoffs: with Sigma = X'X (columns normalized to unit
/// length), x_knock = X (I - Sigma^-1 S) + U C where C'C = 2S - S Sigma^-1 S
/// and U is an orthonormal basis drawn at random inside the orthogonal
/// complement of the column span of X. Requires n >= 2p rows and a
/// full-column-rank design.
KnockoffDataset construct_fixed_x(const Eigen::MatrixXd& x, const SMatrix& s, RngStream& rng);

/// Same construction with an internally fixed stream (seed 0).
KnockoffDataset construct_fixed_x(const Eigen::MatrixXd& x, const SMatrix& s);

/// Exchange original and knockoff columns at the given (0-based) indices.
/// Applying the same swap twice returns the original dataset bit for bit.
KnockoffDataset swap_columns(const KnockoffDataset& ds, const std::vector<int>& swap_set);

}  // namespace knockoff
