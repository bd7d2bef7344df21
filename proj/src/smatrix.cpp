#include "knockoff/smatrix.hpp"

#include <cmath>
#include <limits>

namespace knockoff {

namespace {

/// Boundary-seeking solvers keep at least this fraction of the feasible
/// interval between s_j and the PSD boundary so the running Cholesky
/// factor of 2 Sigma - diag(s) stays invertible even at zero user slack.
constexpr double kBoundaryGuard = 1e-9;

/// Shared state for the coordinate-descent sweeps: the working s vector
/// and a lower Cholesky factor of D = 2 Sigma - diag(s), kept in sync by
/// rank-one updates.
struct SweepState {
  const Eigen::MatrixXd& sigma;
  Eigen::VectorXd s;
  Eigen::MatrixXd l;
  Eigen::VectorXd work;

  explicit SweepState(const CovModel& cov, double s0)
      : sigma(cov.matrix()),
        s(Eigen::VectorXd::Constant(cov.dim(), s0)),
        l(2.0 * cov.matrix()),
        work(cov.dim()) {
    l.diagonal() -= s;
    if (!detail::chol_in_place(l, 0.0)) {
      throw DegenerateCovariance("coordinate solver: initial 2 Sigma - diag(s) is not PD");
    }
  }

  int dim() const { return static_cast<int>(s.size()); }

  /// s_j += delta while keeping the factor of D = 2 Sigma - diag(s) current
  /// (D_jj moves by -delta, a rank-one change along the j-th basis vector).
  void apply(int j, double delta) {
    if (delta == 0.0) return;
    work.setZero();
    work(j) = std::sqrt(std::abs(delta));
    const bool downdate = delta > 0.0;
    if (!detail::rank1_in_place(l, work, downdate, j)) {
      throw StepInfeasible("coordinate solver: step left the feasible region");
    }
    s(j) += delta;
  }

  /// c_d = e_j' D^-1 e_j computed as |L^-1 e_j|^2 restricted to the lower
  /// solve, and c_n = -|D^-1 e_j|^2 from the full two-sided solve.
  void mvr_coordinates(int j, double& c_n, double& c_d) {
    work.setZero();
    work(j) = 1.0;
    detail::solve_lower_in_place(l, work, j);
    c_d = work.squaredNorm();
    detail::solve_upper_in_place(l, work);
    c_n = -work.squaredNorm();
  }

  /// Schur complement c_m = D_{-j,j}' D_{-j,-j}^-1 D_{-j,j} for coordinate j,
  /// recovered from one forward solve against the full factor:
  /// with u = D e_j minus its j-th entry, t = u' D^-1 u satisfies
  /// t = c_m D_jj / (D_jj - c_m), hence c_m = t D_jj / (t + D_jj).
  double schur_complement(int j) {
    work = 2.0 * sigma.col(j);
    work(j) = 0.0;
    detail::solve_lower_in_place(l, work, 0);
    const double t = work.squaredNorm();
    const double d_jj = 2.0 * sigma(j, j) - s(j);
    return t * d_jj / (t + d_jj);
  }
};

void check_solvable(const CovModel& sigma, const char* who) {
  if (sigma.min_eigenvalue() <= 1e-10) {
    throw DegenerateCovariance(std::string(who) +
                               ": covariance minimum eigenvalue is <= 1e-10");
  }
}

/// Trace of D^-1 from its lower factor: sum of squared norms of the
/// columns of L^-1, each obtained by a forward solve started at its
/// first nonzero row.
double trace_inverse(const Eigen::MatrixXd& l, Eigen::VectorXd& work) {
  const int p = static_cast<int>(l.rows());
  double total = 0.0;
  for (int j = 0; j < p; ++j) {
    work.setZero();
    work(j) = 1.0;
    detail::solve_lower_in_place(l, work, j);
    total += work.squaredNorm();
  }
  return total;
}

}  // namespace

SMatrix solve_equicorrelated(const CovModel& sigma, const SolverOptions& opts) {
  opts.validate();
  check_solvable(sigma, "solve_equicorrelated");
  const double value =
      std::min(2.0 * sigma.min_eigenvalue(), 1.0) * (1.0 - opts.slack);
  return SMatrix{Eigen::VectorXd::Constant(sigma.dim(), value), sigma.dim(), opts.slack};
}

SMatrix solve_sdp(const CovModel& sigma, const SolverOptions& opts) {
  opts.validate();
  check_solvable(sigma, "solve_sdp");
  const double eff_slack = std::max(opts.slack, kBoundaryGuard);
  SweepState st(sigma, sigma.min_eigenvalue());
  const int p = st.dim();

  // Smoothed ascent on sum(s) + mu [log det D + sum log(1 - s_j)] with a
  // geometrically decreasing smoothing weight mu. A plain "push each s_j
  // to its Schur cap" sweep is monotone per coordinate and therefore locks
  // into corner points of the feasible set that can sit far from the
  // optimum (one coordinate absorbs all the slack and blocks the rest).
  // The smoothing keeps every iterate strictly interior so later sweeps
  // can rebalance, and as mu -> 0 the iterates track the central path to
  // the true maximizer. Each coordinate maximizer is closed-form: the
  // stationarity condition is the quadratic
  //   x^2 - (cap + 1 - 2 mu) x + cap - mu (cap + 1) = 0,
  // whose smaller root is the unique stationary point below min(1, cap).
  for (double mu = 1.0; mu >= 1e-9; mu *= 0.1) {
    const double level_tol = std::max(opts.converge_tol * mu, 1e-13);
    for (int iter = 0; iter < opts.n_iter; ++iter) {
      double max_move = 0.0;
      for (int j = 0; j < p; ++j) {
        const double cap = 2.0 * sigma(j, j) - st.schur_complement(j);
        const double b = cap + 1.0 - 2.0 * mu;
        const double c0 = cap - mu * (cap + 1.0);
        const double disc = std::max(0.0, b * b - 4.0 * c0);
        double target = 0.5 * (b - std::sqrt(disc));
        const double hi = std::min(1.0, cap * (1.0 - kBoundaryGuard));
        target = std::min(std::max(target, 0.0), hi);
        const double delta = target - st.s(j);
        st.apply(j, delta);
        if (opts.on_coordinate_step) opts.on_coordinate_step(st.s);
        max_move = std::max(max_move, std::abs(delta));
      }
      if (max_move < level_tol) break;
    }
  }
  // One exact pass lands each coordinate on the slack-adjusted cap. From
  // the smoothed optimum the caps equal the optimal values up to the final
  // smoothing level, so this polish cannot re-introduce the corner stall.
  for (int j = 0; j < p; ++j) {
    const double cap = 2.0 * sigma(j, j) - st.schur_complement(j);
    double target = std::min(1.0, cap * (1.0 - eff_slack));
    target = std::max(target, 0.0);
    st.apply(j, target - st.s(j));
    if (opts.on_coordinate_step) opts.on_coordinate_step(st.s);
  }
  return SMatrix{st.s, p, opts.slack};
}

double mvr_coordinate_root(double c_n, double c_d, double s_jj) {
  if (!(c_n < 0.0) || !(c_d > 0.0) || !(s_jj > 0.0)) {
    throw InvalidParams("mvr_coordinate_root: requires c_n < 0, c_d > 0, s_jj > 0");
  }
  const double lo = -s_jj;
  const double hi = 1.0 / c_d;
  const auto inside = [&](double x) { return std::isfinite(x) && x > lo && x < hi; };

  const double a = -c_n - c_d * c_d;
  const double b = 2.0 * (-c_n * s_jj + c_d);
  const double c0 = -c_n * s_jj * s_jj - 1.0;
  if (std::abs(a) < 1e-14) {
    // Degenerate leading coefficient: the optimality condition is linear.
    if (b == 0.0) {
      throw NoRootInInterval("mvr_coordinate_root: degenerate optimality condition");
    }
    const double root = -c0 / b;
    if (inside(root)) return root;
    throw NoRootInInterval("mvr_coordinate_root: linear root left the feasible interval");
  }
  const double disc = b * b - 4.0 * a * c0;
  if (disc < 0.0) {
    throw NoRootInInterval("mvr_coordinate_root: negative discriminant");
  }
  const double sq = std::sqrt(disc);
  const double q = -0.5 * (b + std::copysign(sq, b));
  const double r1 = q / a;
  const double r2 = (q != 0.0) ? c0 / q : r1;
  if (inside(r1)) return r1;
  if (inside(r2)) return r2;
  throw NoRootInInterval("mvr_coordinate_root: no root inside (-s_jj, 1/c_d)");
}

SMatrix solve_mvr(const CovModel& sigma, const SolverOptions& opts) {
  opts.validate();
  check_solvable(sigma, "solve_mvr");
  SweepState st(sigma, sigma.min_eigenvalue());
  const int p = st.dim();
  for (int iter = 0; iter < opts.n_iter; ++iter) {
    double max_move = 0.0;
    for (int j = 0; j < p; ++j) {
      double c_n, c_d;
      st.mvr_coordinates(j, c_n, c_d);
      const double delta = mvr_coordinate_root(c_n, c_d, st.s(j));
      if (!(delta > -st.s(j)) || !(delta < 1.0 / c_d)) {
        throw StepInfeasible("solve_mvr: coordinate root left its feasible interval");
      }
      st.apply(j, delta);
      if (opts.on_coordinate_step) opts.on_coordinate_step(st.s);
      max_move = std::max(max_move, std::abs(delta));
    }
    if (max_move < opts.converge_tol) break;
  }
  return SMatrix{st.s, p, 0.0};
}

SMatrix solve_maxent(const CovModel& sigma, const SolverOptions& opts) {
  opts.validate();
  check_solvable(sigma, "solve_maxent");
  SweepState st(sigma, sigma.min_eigenvalue());
  const int p = st.dim();
  for (int iter = 0; iter < opts.n_iter; ++iter) {
    double max_move = 0.0;
    for (int j = 0; j < p; ++j) {
      // Coordinate optimum of the log-det objective: the midpoint of the
      // feasible interval (0, 2 Sigma_jj - c_m).
      const double target = 0.5 * (2.0 * sigma(j, j) - st.schur_complement(j));
      const double delta = target - st.s(j);
      st.apply(j, delta);
      if (opts.on_coordinate_step) opts.on_coordinate_step(st.s);
      max_move = std::max(max_move, std::abs(delta));
    }
    if (max_move < opts.converge_tol) break;
  }
  return SMatrix{st.s, p, 0.0};
}

SMatrix scale_smatrix(const SMatrix& s, double gamma) {
  if (!(gamma >= 0.0) || !(gamma <= 1.0)) {
    throw InvalidParams("scale_smatrix: gamma must lie in [0, 1]");
  }
  return SMatrix{gamma * s.s, s.sigma_dim, s.slack};
}

SMatrix solve_blockdiag(const std::vector<CovModel>& blocks, SMatrixMethod method,
                        const SolverOptions& opts) {
  if (blocks.empty()) {
    throw InvalidParams("solve_blockdiag: at least one block is required");
  }
  int total = 0;
  for (const CovModel& b : blocks) total += b.dim();
  Eigen::VectorXd s(total);
  double slack = 0.0;
  int offset = 0;
  for (const CovModel& b : blocks) {
    const SMatrix part = solve_smatrix(b, method, opts);
    s.segment(offset, b.dim()) = part.s;
    slack = part.slack;
    offset += b.dim();
  }
  return SMatrix{std::move(s), total, slack};
}

SMatrix approx_then_linesearch(const CovModel& sigma, const std::vector<int>& block_sizes,
                               SMatrixMethod method, const SolverOptions& opts) {
  if (method != SMatrixMethod::mvr && method != SMatrixMethod::maxent) {
    throw InvalidParams("approx_then_linesearch: method must be mvr or maxent");
  }
  const int p = sigma.dim();
  int total = 0;
  for (int sz : block_sizes) {
    if (sz < 1) throw InvalidParams("approx_then_linesearch: block sizes must be positive");
    total += sz;
  }
  if (total != p) {
    throw InvalidParams("approx_then_linesearch: block sizes must partition the dimension");
  }

  // Step 1: solve the block-diagonal restriction of Sigma.
  Eigen::VectorXd s_approx(p);
  int offset = 0;
  for (int sz : block_sizes) {
    const CovModel block(sigma.matrix().block(offset, offset, sz, sz));
    const SMatrix part = solve_smatrix(block, method, opts);
    s_approx.segment(offset, sz) = part.s;
    offset += sz;
  }

  // Step 2: keep the loss-minimizing feasible scaling on a uniform grid of
  // 101 points over [0, 1]. The zero point is never a candidate because both
  // losses diverge when S is singular.
  const int kGridIntervals = 100;
  double best_gamma = -1.0;
  double best_loss = std::numeric_limits<double>::infinity();
  Eigen::MatrixXd d(p, p);
  Eigen::VectorXd work(p);
  for (int g = 1; g <= kGridIntervals; ++g) {
    const double gamma = static_cast<double>(g) / kGridIntervals;
    d = 2.0 * sigma.matrix();
    d.diagonal() -= gamma * s_approx;
    if (!detail::chol_in_place(d, 1e-12)) continue;  // infeasible scaling
    double loss;
    if (method == SMatrixMethod::mvr) {
      loss = (gamma * s_approx).cwiseInverse().sum() + trace_inverse(d, work);
    } else {
      loss = -(gamma * s_approx).array().log().sum() -
             2.0 * d.diagonal().array().log().sum();
    }
    if (loss < best_loss) {
      best_loss = loss;
      best_gamma = gamma;
    }
  }
  if (best_gamma < 0.0) {
    throw NoFeasibleGamma("approx_then_linesearch: no grid scaling kept 2 Sigma - gamma S PSD");
  }
  return SMatrix{best_gamma * s_approx, p, 0.0};
}

LossReport loss_report(const CovModel& sigma, const SMatrix& s) {
  const int p = sigma.dim();
  if (s.sigma_dim != p || s.s.size() != p) {
    throw InvalidParams("loss_report: S-matrix dimension does not match the covariance");
  }
  for (int j = 0; j < p; ++j) {
    if (!(s.s(j) > 1e-12)) {
      throw DegenerateCovariance("loss_report: s has a non-positive entry");
    }
  }
  Eigen::MatrixXd d = 2.0 * sigma.matrix();
  d.diagonal() -= s.s;
  if (!detail::chol_in_place(d, 1e-12)) {
    throw DegenerateCovariance("loss_report: 2 Sigma - diag(s) is not positive definite");
  }
  Eigen::VectorXd work(p);
  LossReport report;
  report.mvr = s.s.cwiseInverse().sum() + trace_inverse(d, work);
  report.maxent = -s.s.array().log().sum() - 2.0 * d.diagonal().array().log().sum();
  report.mac = (1.0 - s.s.array()).abs().mean();
  return report;
}

CovModel estimate_covariance(const Eigen::MatrixXd& x, CovEstimator method) {
  const int n = static_cast<int>(x.rows());
  const int p = static_cast<int>(x.cols());
  if (n < 2 || p < 1) {
    throw DegenerateData("estimate_covariance: needs at least two rows and one column");
  }
  Eigen::MatrixXd centered = x.rowwise() - x.colwise().mean();
  Eigen::MatrixXd sample = (centered.transpose() * centered) / static_cast<double>(n);
  for (int j = 0; j < p; ++j) {
    if (!(sample(j, j) > 0.0)) {
      throw DegenerateData("estimate_covariance: column with zero variance");
    }
  }
  if (method == CovEstimator::mle) {
    return CovModel::regularized(sample);
  }

  // Ledoit-Wolf shrinkage toward the scaled identity, with the closed-form
  // intensity min(beta_bar, delta) / delta.
  const double mu = sample.trace() / p;
  Eigen::MatrixXd deviation = sample;
  deviation.diagonal().array() -= mu;
  const double delta = deviation.squaredNorm() / p;
  double alpha = 0.0;
  if (delta > 0.0) {
    double beta_sum = 0.0;
    for (int t = 0; t < n; ++t) {
      const Eigen::VectorXd row = centered.row(t);
      beta_sum += (row * row.transpose() - sample).squaredNorm();
    }
    const double beta_bar = beta_sum / (static_cast<double>(n) * n * p);
    alpha = std::min(beta_bar, delta) / delta;
  }
  Eigen::MatrixXd shrunk = (1.0 - alpha) * sample;
  shrunk.diagonal().array() += alpha * mu;
  return CovModel::regularized(shrunk);
}

SMatrix solve_smatrix(const CovModel& sigma, SMatrixMethod method, const SolverOptions& opts) {
  switch (method) {
    case SMatrixMethod::mvr:
      return solve_mvr(sigma, opts);
    case SMatrixMethod::maxent:
      return solve_maxent(sigma, opts);
    case SMatrixMethod::sdp:
      return solve_sdp(sigma, opts);
    case SMatrixMethod::equicorrelated:
      return solve_equicorrelated(sigma, opts);
  }
  throw InvalidKind("solve_smatrix: unknown method");
}

}  // namespace knockoff
