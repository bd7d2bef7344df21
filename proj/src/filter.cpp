#include "knockoff/filter.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace knockoff {

namespace {

struct ScaledDesign {
  Eigen::MatrixXd m;      // [X, X_knock] with columns scaled to unit sample sd
  Eigen::VectorXd scale;  // per-column sd (1 for constant columns)
};

ScaledDesign make_scaled(const KnockoffDataset& ds) {
  const int n = static_cast<int>(ds.x.rows());
  const int p = static_cast<int>(ds.x.cols());
  if (ds.x_knock.rows() != n || ds.x_knock.cols() != p) {
    throw InvalidParams("augmented design: knockoff block shape does not match the design");
  }
  ScaledDesign out;
  out.m.resize(n, 2 * p);
  out.m.leftCols(p) = ds.x;
  out.m.rightCols(p) = ds.x_knock;
  out.scale.resize(2 * p);
  for (int j = 0; j < 2 * p; ++j) {
    const double mean = out.m.col(j).mean();
    const double var = (out.m.col(j).array() - mean).square().sum() / n;
    const double sd = std::sqrt(var);
    out.scale(j) = sd > 0.0 ? sd : 1.0;
    out.m.col(j) /= out.scale(j);
  }
  return out;
}

void check_response(const Eigen::MatrixXd& m, const Eigen::VectorXd& y) {
  if (y.size() != m.rows()) {
    throw InvalidParams("response length does not match the number of rows");
  }
  if (!y.allFinite()) {
    throw InvalidParams("response has non-finite entries");
  }
}

/// Random fold labels: a shuffled index vector taken modulo the fold count.
std::vector<int> cv_fold_labels(int n, int folds, RngStream& rng) {
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  for (int i = n - 1; i > 0; --i) {
    const int j = static_cast<int>(rng.uniform_int(0, i));
    std::swap(idx[i], idx[j]);
  }
  std::vector<int> label(n);
  for (int pos = 0; pos < n; ++pos) {
    label[idx[pos]] = pos % folds;
  }
  return label;
}

double soft_threshold(double z, double t) {
  if (z > t) return z - t;
  if (z < -t) return z + t;
  return 0.0;
}

/// Cyclic coordinate-descent lasso along one descending penalty path.
///
/// The Gram matrix G = M'M/n is cached once per design, and the full
/// gradient vector grad = M'(y - M beta)/n = M'y/n - G beta is maintained
/// incrementally across coordinate updates, so (a) visiting a coordinate
/// that does not move costs O(1), (b) the whole path shares one Gram, and
/// (c) the stationarity certificate is available after every pass for
/// free.
///
/// Convergence per penalty level is declared on the stationarity
/// conditions themselves: stop once every coordinate satisfies
/// |grad_j| <= lambda + tol (inactive) or |grad_j - lambda sign(beta_j)|
/// <= tol (active) at tol 1e-7. Gauging convergence on coordinate move
/// sizes instead is unreliable here: knockoff designs built on the
/// feasibility boundary contain near-duplicate column pairs, and iterates
/// can shuffle weight along those directions indefinitely even though the
/// objective and the gradient conditions converged long before.
///
/// The same boundary degeneracy can also make plain cyclic descent crawl:
/// when the Gram matrix has tiny eigenvalues on the active set, the
/// per-pass contraction factor approaches 1 and tens of thousands of
/// passes may separate the iterate from stationarity. Periodically
/// (passes 50, 100, 200, ...) the solver therefore tries to finish the
/// level in one step with an active-set refinement: solve the
/// stationarity equations on the current signed support by a minimum-norm
/// least-squares solve, drop coordinates whose solved sign contradicts
/// the assumed sign, admit the worst inactive violator, and repeat a few
/// rounds. A candidate is accepted only if its full gradient, recomputed
/// from scratch, meets the same stationarity tolerance, so acceleration
/// can never weaken the returned solution.
class LassoPath {
 public:
  LassoPath(const Eigen::MatrixXd& m, const Eigen::VectorXd& y)
      : gram_((m.transpose() * m) / static_cast<double>(m.rows())),
        qy_((m.transpose() * y) / static_cast<double>(m.rows())),
        beta_(Eigen::VectorXd::Zero(m.cols())),
        grad_(qy_) {}

  const Eigen::VectorXd& beta() const { return beta_; }

  /// Solve at one penalty level, warm-starting from the current state.
  void fit(double lambda, int max_passes) {
    const int q = static_cast<int>(beta_.size());
    // Re-derive the gradient from scratch at each level so incremental
    // rounding from earlier levels cannot accumulate into the certificate.
    grad_.noalias() = qy_ - gram_ * beta_;
    int next_refine = 50;
    for (int pass = 0; pass < max_passes; ++pass) {
      for (int j = 0; j < q; ++j) {
        const double cj = gram_(j, j);
        if (cj <= 0.0) continue;
        const double g = grad_(j) + cj * beta_(j);
        const double bj = soft_threshold(g, lambda) / cj;
        const double diff = bj - beta_(j);
        if (diff != 0.0) {
          grad_.noalias() -= diff * gram_.col(j);
          beta_(j) = bj;
        }
      }
      double worst = 0.0;
      for (int j = 0; j < q; ++j) {
        if (gram_(j, j) <= 0.0) continue;
        const double v = beta_(j) == 0.0
                             ? std::abs(grad_(j)) - lambda
                             : std::abs(grad_(j) - lambda * (beta_(j) > 0.0 ? 1.0 : -1.0));
        worst = std::max(worst, v);
      }
      if (worst <= kTol) return;
      if (pass + 1 == next_refine) {
        next_refine *= 2;
        if (refine(lambda)) return;
      }
    }
    throw ConvergenceFailure("lasso coordinate descent did not converge within " +
                             std::to_string(max_passes) + " passes");
  }

 private:
  static constexpr double kTol = 1e-7;

  bool refine(double lambda) {
    const int q = static_cast<int>(beta_.size());
    std::vector<int> act;
    std::vector<double> sgn;
    for (int j = 0; j < q; ++j) {
      if (beta_(j) != 0.0) {
        act.push_back(j);
        sgn.push_back(beta_(j) > 0.0 ? 1.0 : -1.0);
      }
    }
    for (int round = 0; round < 30 && !act.empty(); ++round) {
      const int a = static_cast<int>(act.size());
      Eigen::MatrixXd gaa(a, a);
      Eigen::VectorXd rhs(a);
      for (int i = 0; i < a; ++i) {
        rhs(i) = qy_(act[i]) - lambda * sgn[i];
        for (int k = 0; k < a; ++k) gaa(i, k) = gram_(act[i], act[k]);
      }
      Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(gaa);
      const Eigen::VectorXd z = cod.solve(rhs);
      std::vector<int> keep_act;
      std::vector<double> keep_sgn;
      for (int i = 0; i < a; ++i) {
        if (z(i) * sgn[i] > 0.0) {
          keep_act.push_back(act[i]);
          keep_sgn.push_back(sgn[i]);
        }
      }
      if (static_cast<int>(keep_act.size()) < a) {
        act = std::move(keep_act);
        sgn = std::move(keep_sgn);
        continue;
      }
      Eigen::VectorXd cand = Eigen::VectorXd::Zero(q);
      for (int i = 0; i < a; ++i) cand(act[i]) = z(i);
      const Eigen::VectorXd g = qy_ - gram_ * cand;
      double worst = 0.0;
      int worst_j = -1;
      for (int j = 0; j < q; ++j) {
        if (gram_(j, j) <= 0.0) continue;
        const double v = cand(j) == 0.0
                             ? std::abs(g(j)) - lambda
                             : std::abs(g(j) - lambda * (cand(j) > 0.0 ? 1.0 : -1.0));
        if (v > worst) {
          worst = v;
          worst_j = j;
        }
      }
      if (worst <= kTol) {
        beta_ = cand;
        grad_ = g;
        return true;
      }
      // An active-side violation means the signed-support system has no
      // usable solution; hand control back to coordinate descent.
      if (worst_j < 0 || cand(worst_j) != 0.0) return false;
      act.push_back(worst_j);
      sgn.push_back(g(worst_j) > 0.0 ? 1.0 : -1.0);
    }
    return false;
  }

  Eigen::MatrixXd gram_;
  Eigen::VectorXd qy_;
  Eigen::VectorXd beta_;
  Eigen::VectorXd grad_;
};

std::vector<double> descending_grid(const std::vector<double>& grid) {
  if (grid.empty()) throw InvalidParams("lambda grid must be non-empty");
  for (double v : grid) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw InvalidParams("lambda grid entries must be finite and non-negative");
    }
  }
  std::vector<double> sorted = grid;
  std::sort(sorted.begin(), sorted.end(), std::greater<double>());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  return sorted;
}

void check_cv_inputs(int n, int folds) {
  if (folds < 2 || folds > n) {
    throw InvalidParams("cross-validation folds must lie in [2, n]");
  }
}

/// Ridge solves for a whole lambda grid from one eigendecomposition of the
/// Gram matrix: beta(lambda) = E diag(1/(d + lambda)) E' M'y. Eigenvalues
/// below 1e-12 contribute nothing at lambda = 0 (pseudo-inverse limit).
struct RidgeSolver {
  Eigen::VectorXd d;
  Eigen::MatrixXd e;
  Eigen::VectorXd eb;  // E' M'y

  RidgeSolver(const Eigen::MatrixXd& m, const Eigen::VectorXd& y) {
    const Eigen::MatrixXd gram = m.transpose() * m;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
    if (eig.info() != Eigen::Success) {
      throw ConvergenceFailure("ridge: Gram eigendecomposition failed");
    }
    d = eig.eigenvalues();
    e = eig.eigenvectors();
    eb = e.transpose() * (m.transpose() * y);
  }

  Eigen::VectorXd solve(double lambda) const {
    Eigen::VectorXd scaled(d.size());
    for (int i = 0; i < d.size(); ++i) {
      const double denom = d(i) + lambda;
      scaled(i) = denom > 1e-12 ? eb(i) / denom : 0.0;
    }
    return e * scaled;
  }
};

Eigen::MatrixXd take_rows(const Eigen::MatrixXd& m, const std::vector<int>& rows) {
  Eigen::MatrixXd out(static_cast<int>(rows.size()), m.cols());
  for (int i = 0; i < static_cast<int>(rows.size()); ++i) {
    out.row(i) = m.row(rows[i]);
  }
  return out;
}

Eigen::VectorXd take_entries(const Eigen::VectorXd& v, const std::vector<int>& rows) {
  Eigen::VectorXd out(static_cast<int>(rows.size()));
  for (int i = 0; i < static_cast<int>(rows.size()); ++i) {
    out(i) = v(rows[i]);
  }
  return out;
}

}  // namespace

Eigen::VectorXd ols_coef(const KnockoffDataset& ds, const Eigen::VectorXd& y) {
  const int p = static_cast<int>(ds.x.cols());
  Eigen::MatrixXd m(ds.x.rows(), 2 * p);
  m.leftCols(p) = ds.x;
  m.rightCols(p) = ds.x_knock;
  check_response(m, y);
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(m);
  if (qr.rank() < 2 * p) {
    throw RankDeficient("ols_coef: augmented design is rank deficient");
  }
  return qr.solve(y);
}

Eigen::VectorXd ridge_coef(const KnockoffDataset& ds, const Eigen::VectorXd& y,
                           const std::vector<double>& lambda_grid, int cv_folds, RngStream& rng) {
  const ScaledDesign sd = make_scaled(ds);
  check_response(sd.m, y);
  const int n = static_cast<int>(sd.m.rows());
  check_cv_inputs(n, cv_folds);
  const std::vector<double> path = descending_grid(lambda_grid);

  double best_lambda = path.front();
  if (path.size() > 1) {
    const std::vector<int> label = cv_fold_labels(n, cv_folds, rng);
    std::vector<double> sse(path.size(), 0.0);
    for (int f = 0; f < cv_folds; ++f) {
      std::vector<int> train, val;
      for (int i = 0; i < n; ++i) {
        (label[i] == f ? val : train).push_back(i);
      }
      const Eigen::MatrixXd mt = take_rows(sd.m, train);
      const Eigen::MatrixXd mv = take_rows(sd.m, val);
      const Eigen::VectorXd yt = take_entries(y, train);
      const Eigen::VectorXd yv = take_entries(y, val);
      const RidgeSolver solver(mt, yt);
      for (std::size_t k = 0; k < path.size(); ++k) {
        sse[k] += (yv - mv * solver.solve(path[k])).squaredNorm();
      }
    }
    std::size_t best = 0;
    for (std::size_t k = 1; k < path.size(); ++k) {
      if (sse[k] < sse[best]) best = k;
    }
    best_lambda = path[best];
  }

  const RidgeSolver full(sd.m, y);
  Eigen::VectorXd beta = full.solve(best_lambda);
  return beta.cwiseQuotient(sd.scale);
}

Eigen::VectorXd lasso_coef(const KnockoffDataset& ds, const Eigen::VectorXd& y,
                           const std::vector<double>& lambda_grid, int cv_folds, RngStream& rng,
                           int max_passes) {
  if (max_passes < 1) throw InvalidParams("lasso_coef: max_passes must be positive");
  const ScaledDesign sd = make_scaled(ds);
  check_response(sd.m, y);
  const int n = static_cast<int>(sd.m.rows());
  check_cv_inputs(n, cv_folds);
  const std::vector<double> path = descending_grid(lambda_grid);

  std::size_t best = 0;
  if (path.size() > 1) {
    const std::vector<int> label = cv_fold_labels(n, cv_folds, rng);
    std::vector<double> sse(path.size(), 0.0);
    for (int f = 0; f < cv_folds; ++f) {
      std::vector<int> train, val;
      for (int i = 0; i < n; ++i) {
        (label[i] == f ? val : train).push_back(i);
      }
      const Eigen::MatrixXd mt = take_rows(sd.m, train);
      const Eigen::MatrixXd mv = take_rows(sd.m, val);
      const Eigen::VectorXd yt = take_entries(y, train);
      const Eigen::VectorXd yv = take_entries(y, val);
      LassoPath solver(mt, yt);
      for (std::size_t k = 0; k < path.size(); ++k) {
        solver.fit(path[k], max_passes);
        sse[k] += (yv - mv * solver.beta()).squaredNorm();
      }
    }
    for (std::size_t k = 1; k < path.size(); ++k) {
      if (sse[k] < sse[best]) best = k;
    }
  }

  // Full-data refit, warm-started down the path to the selected lambda.
  LassoPath solver(sd.m, y);
  for (std::size_t k = 0; k <= best; ++k) {
    solver.fit(path[k], max_passes);
  }
  return solver.beta().cwiseQuotient(sd.scale);
}

StatVector lcd_statistic(const Eigen::VectorXd& coef, const std::string& name) {
  const int q = static_cast<int>(coef.size());
  if (q < 2 || q % 2 != 0) {
    throw InvalidParams("lcd_statistic: coefficient vector must have even length 2p");
  }
  const int p = q / 2;
  StatVector out;
  out.statistic_name = name;
  out.w.resize(p);
  for (int j = 0; j < p; ++j) {
    out.w(j) = std::abs(coef(j)) - std::abs(coef(j + p));
  }
  return out;
}

StatVector lsm_statistic(const KnockoffDataset& ds, const Eigen::VectorXd& y,
                         const std::vector<double>& lambda_path, int max_passes) {
  if (max_passes < 1) throw InvalidParams("lsm_statistic: max_passes must be positive");
  const ScaledDesign sd = make_scaled(ds);
  check_response(sd.m, y);
  const int q = static_cast<int>(sd.m.cols());
  const int p = q / 2;
  const std::vector<double> path = descending_grid(lambda_path);

  LassoPath solver(sd.m, y);
  Eigen::VectorXd entry = Eigen::VectorXd::Zero(q);  // largest lambda where j is active
  for (double lambda : path) {
    solver.fit(lambda, max_passes);
    for (int j = 0; j < q; ++j) {
      if (entry(j) == 0.0 && solver.beta()(j) != 0.0) {
        entry(j) = lambda;
      }
    }
  }

  StatVector out;
  out.statistic_name = "lsm";
  out.tuning["path_points"] = std::to_string(path.size());
  out.w.resize(p);
  for (int j = 0; j < p; ++j) {
    const double zj = entry(j);
    const double zk = entry(j + p);
    if (zj == zk) {
      out.w(j) = 0.0;
    } else {
      out.w(j) = std::max(zj, zk) * (zj > zk ? 1.0 : -1.0);
    }
  }
  return out;
}

SelectionResult knockoff_threshold(const StatVector& w, double q) {
  if (!(q > 0.0) || !(q < 1.0)) {
    throw InvalidParams("knockoff_threshold: q must lie in (0, 1)");
  }
  const int p = static_cast<int>(w.w.size());
  std::vector<double> candidates;
  candidates.reserve(p);
  for (int j = 0; j < p; ++j) {
    if (w.w(j) != 0.0) candidates.push_back(std::abs(w.w(j)));
  }
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

  double threshold = std::numeric_limits<double>::infinity();
  for (double t : candidates) {
    int pos = 0, neg = 0;
    for (int j = 0; j < p; ++j) {
      if (w.w(j) >= t) ++pos;
      if (w.w(j) <= -t) ++neg;
    }
    if (pos > 0 && (neg + 1.0) / pos <= q) {
      threshold = t;
      break;
    }
  }

  SelectionResult sel;
  sel.threshold = threshold;
  sel.q = q;
  if (std::isfinite(threshold)) {
    for (int j = 0; j < p; ++j) {
      if (w.w(j) >= threshold) sel.selected.push_back(j);
    }
  }
  return sel;
}

int psi_count(const std::vector<int>& signs, double q) {
  if (!(q > 0.0) || !(q < 1.0)) {
    throw InvalidParams("psi_count: q must lie in (0, 1)");
  }
  const int m = static_cast<int>(signs.size());
  int vplus = 0;
  int best = 0;
  for (int k = 0; k < m; ++k) {
    if (signs[k] != 1 && signs[k] != -1) {
      throw InvalidParams("psi_count: signs must be +1 or -1");
    }
    if (signs[k] == 1) ++vplus;
    const int neg = k + 1 - vplus;
    if (vplus > 0 && (neg + 1.0) / vplus <= q) {
      best = k + 1;
    }
  }
  // The prefix index is allowed to run past the end of the sequence with the
  // positive count frozen at its final value, so the count of selections is a
  // deterministic function of the returned value. The largest in-bounds
  // feasible prefix is never shortened by this: the tail bound dominates any
  // feasible k <= m whenever it applies.
  if (vplus > 0) {
    const int tail = static_cast<int>(std::floor((1.0 + q) * vplus - 1.0 + 1e-9));
    if (tail > m) return tail;
  }
  return best;
}

std::pair<double, double> evaluate(const SelectionResult& sel, const Eigen::VectorXd& beta_true) {
  const int p = static_cast<int>(beta_true.size());
  int support = 0;
  for (int j = 0; j < p; ++j) {
    if (beta_true(j) != 0.0) ++support;
  }
  int true_pos = 0, false_pos = 0;
  for (int j : sel.selected) {
    if (j < 0 || j >= p) {
      throw IndexOutOfRange("evaluate: selected index outside [0, p)");
    }
    (beta_true(j) != 0.0 ? true_pos : false_pos)++;
  }
  const double denom_sel = std::max<int>(static_cast<int>(sel.selected.size()), 1);
  const double denom_sup = std::max(support, 1);
  return {false_pos / denom_sel, true_pos / denom_sup};
}

std::vector<double> default_lambda_grid(const KnockoffDataset& ds, const Eigen::VectorXd& y,
                                        int points, double min_ratio) {
  if (points < 1 || !(min_ratio > 0.0) || !(min_ratio <= 1.0)) {
    throw InvalidParams("default_lambda_grid: needs points >= 1 and min_ratio in (0, 1]");
  }
  const ScaledDesign sd = make_scaled(ds);
  check_response(sd.m, y);
  const double n = static_cast<double>(sd.m.rows());
  const double lambda_max = (sd.m.transpose() * y).cwiseAbs().maxCoeff() / n;
  if (!(lambda_max > 0.0)) {
    return {0.0};
  }
  std::vector<double> grid(points);
  if (points == 1) {
    grid[0] = lambda_max;
    return grid;
  }
  const double log_max = std::log(lambda_max);
  const double log_min = std::log(lambda_max * min_ratio);
  for (int i = 0; i < points; ++i) {
    grid[i] = std::exp(log_max + (log_min - log_max) * i / (points - 1));
  }
  return grid;
}

StatVector compute_statistic(const KnockoffDataset& ds, const Eigen::VectorXd& y, StatKind kind,
                             const StatOptions& opts, RngStream& rng) {
  switch (kind) {
    case StatKind::lcd: {
      const std::vector<double> grid =
          default_lambda_grid(ds, y, opts.lambda_points, opts.lambda_min_ratio);
      StatVector w =
          lcd_statistic(lasso_coef(ds, y, grid, opts.cv_folds, rng, opts.max_passes), "lcd");
      w.tuning["cv_folds"] = std::to_string(opts.cv_folds);
      w.tuning["lambda_points"] = std::to_string(opts.lambda_points);
      return w;
    }
    case StatKind::ridge: {
      const double n = static_cast<double>(ds.x.rows());
      std::vector<double> grid(opts.lambda_points);
      const double hi = std::log(1e3 * n);
      const double lo = std::log(1e-4 * n);
      for (int i = 0; i < opts.lambda_points; ++i) {
        grid[i] = std::exp(hi + (lo - hi) * i / std::max(1, opts.lambda_points - 1));
      }
      StatVector w = lcd_statistic(ridge_coef(ds, y, grid, opts.cv_folds, rng), "ridge");
      w.tuning["cv_folds"] = std::to_string(opts.cv_folds);
      return w;
    }
    case StatKind::ols:
      return lcd_statistic(ols_coef(ds, y), "ols");
    case StatKind::lsm: {
      const std::vector<double> grid =
          default_lambda_grid(ds, y, opts.lambda_points, opts.lambda_min_ratio);
      return lsm_statistic(ds, y, grid, opts.max_passes);
    }
  }
  throw InvalidKind("compute_statistic: unknown statistic kind");
}

}  // namespace knockoff
