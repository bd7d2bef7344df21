#include "knockoff/linalg.hpp"

#include <cmath>

namespace knockoff {
namespace detail {

bool chol_in_place(Eigen::MatrixXd& a, double pivot_tol) {
  const int n = static_cast<int>(a.rows());
  for (int j = 0; j < n; ++j) {
    const double pivot = a(j, j);
    if (!(pivot > pivot_tol)) {
      return false;
    }
    const double d = std::sqrt(pivot);
    a(j, j) = d;
    const int tail = n - j - 1;
    if (tail > 0) {
      a.col(j).tail(tail) /= d;
      // Trailing update, column by column so the traversal stays contiguous.
      for (int k = j + 1; k < n; ++k) {
        a.col(k).tail(n - k).noalias() -= a(k, j) * a.col(j).tail(n - k);
      }
    }
  }
  return true;
}

bool rank1_in_place(Eigen::MatrixXd& l, Eigen::VectorXd& w, bool downdate, int start) {
  const int n = static_cast<int>(l.rows());
  for (int k = start; k < n; ++k) {
    const double lkk = l(k, k);
    const double wk = w(k);
    double r;
    if (downdate) {
      const double d = (lkk - wk) * (lkk + wk);
      if (!(d > 0.0)) {
        return false;  // the rotation would leave a non-positive pivot
      }
      r = std::sqrt(d);
    } else {
      r = std::hypot(lkk, wk);
    }
    const double c = r / lkk;
    const double s = wk / lkk;
    l(k, k) = r;
    const int tail = n - k - 1;
    if (tail > 0) {
      auto lcol = l.col(k).tail(tail);
      auto wtail = w.tail(tail);
      if (downdate) {
        lcol = (lcol - s * wtail) / c;
      } else {
        lcol = (lcol + s * wtail) / c;
      }
      wtail = c * wtail - s * lcol;
    }
  }
  return true;
}

void solve_lower_in_place(const Eigen::MatrixXd& l, Eigen::VectorXd& x, int start) {
  const int n = static_cast<int>(l.rows());
  for (int j = start; j < n; ++j) {
    x(j) /= l(j, j);
    const int tail = n - j - 1;
    if (tail > 0) {
      x.tail(tail).noalias() -= x(j) * l.col(j).tail(tail);
    }
  }
}

void solve_upper_in_place(const Eigen::MatrixXd& l, Eigen::VectorXd& x) {
  const int n = static_cast<int>(l.rows());
  for (int j = n - 1; j >= 0; --j) {
    const int tail = n - j - 1;
    double v = x(j);
    if (tail > 0) {
      v -= l.col(j).tail(tail).dot(x.tail(tail));
    }
    x(j) = v / l(j, j);
  }
}

namespace {

bool shifted_chol_feasible(const Eigen::MatrixXd& a, double shift, Eigen::MatrixXd& work) {
  work = a;
  work.diagonal().array() -= shift;
  return chol_in_place(work, 0.0);
}

}  // namespace

double min_eig_bisect(const Eigen::MatrixXd& a) {
  const int n = static_cast<int>(a.rows());
  // Bracket: Gershgorin bound below, smallest diagonal entry above.
  double lo = a(0, 0);
  double hi = a(0, 0);
  for (int i = 0; i < n; ++i) {
    double radius = 0.0;
    for (int j = 0; j < n; ++j) {
      if (j != i) radius += std::abs(a(i, j));
    }
    lo = std::min(lo, a(i, i) - radius);
    hi = std::min(hi, a(i, i));
  }
  const double tol = 1e-9 * std::max(1.0, std::max(std::abs(lo), std::abs(hi)));
  if (hi - lo <= tol) {
    return 0.5 * (lo + hi);
  }
  Eigen::MatrixXd work(n, n);
  // A diagonal shift at the upper bracket endpoint is never feasible
  // (the minimum eigenvalue is at most the smallest diagonal entry),
  // so the invariant "feasible at lo, infeasible at hi" holds throughout.
  const int kMaxIter = 200;
  int iter = 0;
  while (hi - lo > tol) {
    if (++iter > kMaxIter) {
      throw ConvergenceFailure("minimum-eigenvalue bisection failed to converge");
    }
    const double mid = 0.5 * (lo + hi);
    if (shifted_chol_feasible(a, mid, work)) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

}  // namespace detail

LowerTriangular cholesky(const SymMatrix& a) {
  Eigen::MatrixXd m = a.matrix();
  if (!detail::chol_in_place(m, 1e-12)) {
    throw NotPositiveDefinite("cholesky: matrix is not positive definite (pivot <= 1e-12)");
  }
  m.triangularView<Eigen::StrictlyUpper>().setZero();
  return LowerTriangular(std::move(m));
}

LowerTriangular chol_rank1(const LowerTriangular& l, const Eigen::VectorXd& v,
                           RankOneDirection direction) {
  if (v.size() != l.dim()) {
    throw InvalidParams("chol_rank1: vector length must match factor dimension");
  }
  Eigen::MatrixXd m = l.matrix();
  Eigen::VectorXd w = v;
  const bool ok = detail::rank1_in_place(m, w, direction == RankOneDirection::downdate);
  if (!ok) {
    throw DowndateBreaksPD("chol_rank1: downdate would produce a non-positive-definite matrix");
  }
  return LowerTriangular(std::move(m));
}

Eigen::VectorXd tri_solve(const LowerTriangular& l, const Eigen::VectorXd& b, TriSide side) {
  if (b.size() != l.dim()) {
    throw InvalidParams("tri_solve: right-hand side length must match factor dimension");
  }
  Eigen::VectorXd x = b;
  if (side == TriSide::lower) {
    detail::solve_lower_in_place(l.matrix(), x);
  } else {
    detail::solve_upper_in_place(l.matrix(), x);
  }
  return x;
}

double min_eigenvalue(const SymMatrix& a) {
  return detail::min_eig_bisect(a.matrix());
}

}  // namespace knockoff
