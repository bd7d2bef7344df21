#pragma once

#include <Eigen/Dense>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "knockoff/samplers.hpp"

namespace knockoff {

/// Antisymmetric feature statistics: w(j) compares feature j against its
/// knockoff, and swapping the pair flips the sign of exactly that entry.
struct StatVector {
  Eigen::VectorXd w;
  std::string statistic_name;
  std::map<std::string, std::string> tuning;
};

/// Output of the selection threshold: the data-dependent cutoff, the
/// 0-based selected indices (ascending), and the target level q.
struct SelectionResult {
  double threshold = 0.0;
  std::vector<int> selected;
  double q = 0.0;
};

/// Least-squares coefficients on the augmented design [X, X_knock].
/// Requires n > 2p; throws RankDeficient when the augmented design loses
/// full column rank (e.g. fixed-design knockoffs built on the feasibility
/// boundary).
Eigen::VectorXd ols_coef(const KnockoffDataset& ds, const Eigen::VectorXd& y);

/// Ridge coefficients beta = (M'M + lambda I)^-1 M'y on the augmented
/// design, with lambda chosen by k-fold cross-validation over the supplied
/// grid and the final fit refit on all rows at the selected lambda.
/// Columns are scaled to unit sample standard deviation inside the fit and
/// the coefficients are mapped back to the original scale.
Eigen::VectorXd ridge_coef(const KnockoffDataset& ds, const Eigen::VectorXd& y,
                           const std::vector<double>& lambda_grid, int cv_folds, RngStream& rng);

/// Lasso coefficients minimizing (1/2n) |y - M beta|^2 + lambda |beta|_1 by
/// cyclic coordinate descent with warm starts down the lambda path, with
/// lambda chosen by k-fold cross-validation and a full-data refit at the
/// selected value. Column scaling matches ridge_coef. Convergence at each
/// penalty level is declared when the stationarity conditions hold with
/// residual at most 1e-7; throws ConvergenceFailure after max_passes
/// coordinate sweeps without reaching it.
Eigen::VectorXd lasso_coef(const KnockoffDataset& ds, const Eigen::VectorXd& y,
                           const std::vector<double>& lambda_grid, int cv_folds, RngStream& rng,
                           int max_passes = 1000);

/// Coefficient-difference statistic W_j = |b_j| - |b_{j+p}| from a fitted
/// coefficient vector of length 2p.
StatVector lcd_statistic(const Eigen::VectorXd& coef, const std::string& name = "lcd");

/// Lambda at signed maximum: Z_j is the largest path value at which
/// coordinate j enters the lasso path on the augmented design (0 if it
/// never enters), and W_j = max(Z_j, Z_{j+p}) signed by which of the pair
/// entered first. No cross-validation is involved, so the statistic is a
/// function of the Gram matrix and M'y only.
StatVector lsm_statistic(const KnockoffDataset& ds, const Eigen::VectorXd& y,
                         const std::vector<double>& lambda_path, int max_passes = 1000);

/// Data-dependent selection threshold
///   T = min{ t in {|W_j| : W_j != 0} : (1 + #{W_j <= -t}) / #{W_j >= t} <= q }
/// with T = +infinity (empty selection) when no candidate qualifies.
/// Selected set: { j : W_j >= T }.
SelectionResult knockoff_threshold(const StatVector& w, double q);

/// Largest prefix index k >= 1 of a +/-1 sign sequence (ordered by
/// descending statistic magnitude) with (k - V+ + 1) / V+ <= q, where V+
/// counts the positive signs among the first min(k, size) entries; 0 when
/// no index qualifies. The index may exceed the sequence length (V+ stays
/// frozen past the end), which makes the selection count recoverable from
/// the returned value alone: whenever it is positive, the threshold rule
/// selects exactly ceil((psi + 1) / (1 + q)) coordinates.
int psi_count(const std::vector<int>& signs, double q);

/// (fdp, power) of a selection against the true coefficient support:
/// fdp = |selected ∩ nulls| / max(|selected|, 1),
/// power = |selected ∩ support| / max(|support|, 1).
std::pair<double, double> evaluate(const SelectionResult& sel, const Eigen::VectorXd& beta_true);

/// Log-spaced descending lambda grid from lambda_max = max_j |M_j'y| / n
/// down to min_ratio * lambda_max (computed on scaled columns).
std::vector<double> default_lambda_grid(const KnockoffDataset& ds, const Eigen::VectorXd& y,
                                        int points = 100, double min_ratio = 1e-3);

enum class StatKind { lcd, ridge, ols, lsm };

struct StatOptions {
  int lambda_points = 100;
  double lambda_min_ratio = 1e-3;
  int cv_folds = 5;
  int max_passes = 1000;  ///< coordinate-sweep cap for the lasso engine
};

/// Convenience dispatcher used by the simulation harness and the CLI.
StatVector compute_statistic(const KnockoffDataset& ds, const Eigen::VectorXd& y, StatKind kind,
                             const StatOptions& opts, RngStream& rng);

}  // namespace knockoff
