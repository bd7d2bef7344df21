#pragma once

#include <Eigen/Dense>

#include "knockoff/errors.hpp"

namespace knockoff {

/// Dense symmetric matrix. Construction symmetrizes the input by averaging
/// with its transpose, so downstream code can rely on exact symmetry.
class SymMatrix {
 public:
  explicit SymMatrix(const Eigen::MatrixXd& m) {
    if (m.rows() != m.cols() || m.rows() < 1) {
      throw InvalidParams("SymMatrix requires a square matrix of dimension >= 1");
    }
    if (!m.allFinite()) {
      throw InvalidParams("SymMatrix requires finite entries");
    }
    a_ = 0.5 * (m + m.transpose());
  }

  int dim() const { return static_cast<int>(a_.rows()); }
  const Eigen::MatrixXd& matrix() const { return a_; }
  double operator()(int i, int j) const { return a_(i, j); }

 private:
  Eigen::MatrixXd a_;
};

/// Lower-triangular Cholesky factor with strictly positive diagonal.
class LowerTriangular {
 public:
  explicit LowerTriangular(Eigen::MatrixXd l) : l_(std::move(l)) {
    if (l_.rows() != l_.cols() || l_.rows() < 1) {
      throw InvalidParams("LowerTriangular requires a square matrix");
    }
    for (int j = 0; j < l_.cols(); ++j) {
      if (!(l_(j, j) > 0.0)) {
        throw NotPositiveDefinite("LowerTriangular requires a strictly positive diagonal");
      }
      for (int i = 0; i < j; ++i) {
        l_(i, j) = 0.0;  // normalize: the strict upper triangle is zero
      }
    }
  }

  int dim() const { return static_cast<int>(l_.rows()); }
  const Eigen::MatrixXd& matrix() const { return l_; }
  double operator()(int i, int j) const { return l_(i, j); }

 private:
  Eigen::MatrixXd l_;
};

enum class RankOneDirection { update, downdate };
enum class TriSide { lower, upper };

namespace detail {

/// In-place lower Cholesky factorization (right-looking, column oriented).
/// Returns false as soon as a pivot falls at or below `pivot_tol`.
/// On success the lower triangle of `a` holds L and the strict upper
/// triangle is left untouched (callers must ignore it).
bool chol_in_place(Eigen::MatrixXd& a, double pivot_tol);

/// Rank-one update (A + w wT) or downdate (A - w wT) of a lower Cholesky
/// factor via Givens / hyperbolic rotations. `w` is consumed as workspace.
/// `start` is the first index with a nonzero entry of w; rotations before it
/// are identities and are skipped. Returns false if a downdate rotation
/// would break positive definiteness.
bool rank1_in_place(Eigen::MatrixXd& l, Eigen::VectorXd& w, bool downdate, int start = 0);

/// Solve L x = b in place (forward substitution). Entries of x before
/// `start` are assumed zero on entry and left untouched.
void solve_lower_in_place(const Eigen::MatrixXd& l, Eigen::VectorXd& x, int start = 0);

/// Solve LT x = b in place (backward substitution).
void solve_upper_in_place(const Eigen::MatrixXd& l, Eigen::VectorXd& x);

/// Smallest eigenvalue of a symmetric matrix by bisection on the
/// feasibility of the shifted Cholesky factorization of A - lambda I,
/// bracketed by the Gershgorin bound below and the smallest diagonal
/// entry above. Absolute tolerance ~1e-9 on the bracket.
double min_eig_bisect(const Eigen::MatrixXd& a);

}  // namespace detail

/// Lower Cholesky factorization of a symmetric positive-definite matrix.
/// Throws NotPositiveDefinite when any pivot is <= 1e-12.
LowerTriangular cholesky(const SymMatrix& a);

/// Rank-one update (direction = update, factors A + v vT) or downdate
/// (direction = downdate, factors A - v vT) of a Cholesky factor.
/// Throws DowndateBreaksPD when a downdate rotation is infeasible.
LowerTriangular chol_rank1(const LowerTriangular& l, const Eigen::VectorXd& v,
                           RankOneDirection direction);

/// Triangular solve against the factor or its transpose:
/// side = lower solves L x = b, side = upper solves LT x = b.
Eigen::VectorXd tri_solve(const LowerTriangular& l, const Eigen::VectorXd& b, TriSide side);

/// Minimum eigenvalue by bisection on shifted Cholesky feasibility.
/// Throws ConvergenceFailure if the bracket fails to shrink within the
/// iteration cap (pathological input).
double min_eigenvalue(const SymMatrix& a);

}  // namespace knockoff
