#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "knockoff/covariance.hpp"
#include "knockoff/rng.hpp"
#include "knockoff/smatrix.hpp"
#include "oracle_utils.hpp"

using namespace knockoff;

namespace {

/// Options tightened far past the defaults so solver output can be compared
/// against oracles at fine tolerances.
SolverOptions tight_opts() {
  SolverOptions opts;
  opts.n_iter = 400;
  opts.converge_tol = 1e-12;
  return opts;
}

CovModel equi_model(int p, double rho) { return CovModel(oracle::equi_matrix(p, rho)); }

/// One-dimensional objective a coordinate update of the trace-inverse
/// solver minimizes; written independently from the closed-form root.
double coordinate_objective(double delta, double c_n, double c_d, double s_jj) {
  return 1.0 / (s_jj + delta) - c_n * delta / (1.0 - delta * c_d);
}

}  // namespace

TEST_CASE("SolverOptions: invalid knobs are rejected") {
  SolverOptions opts;
  opts.n_iter = 0;
  CHECK_THROWS_AS(opts.validate(), InvalidParams);
  opts = SolverOptions{};
  opts.converge_tol = 0.0;
  CHECK_THROWS_AS(opts.validate(), InvalidParams);
  opts = SolverOptions{};
  opts.slack = 1.0;
  CHECK_THROWS_AS(opts.validate(), InvalidParams);
}

TEST_CASE("solvers: singular covariance is rejected") {
  // rank-one correlation matrix (all entries 1)
  const CovModel sigma(Eigen::MatrixXd::Ones(3, 3) + 1e-14 * Eigen::MatrixXd::Identity(3, 3));
  CHECK_THROWS_AS(solve_mvr(sigma), DegenerateCovariance);
  CHECK_THROWS_AS(solve_maxent(sigma), DegenerateCovariance);
  CHECK_THROWS_AS(solve_sdp(sigma), DegenerateCovariance);
  CHECK_THROWS_AS(solve_equicorrelated(sigma), DegenerateCovariance);
}

TEST_CASE("solve_equicorrelated: closed form on constant-correlation inputs") {
  SolverOptions opts;  // default slack 1e-5
  // identity: 2 lambda_min = 2 clips at 1
  const SMatrix s1 = solve_equicorrelated(CovModel(Eigen::MatrixXd::Identity(4, 4)), opts);
  for (int j = 0; j < 4; ++j) CHECK(s1.s(j) == doctest::Approx(1.0 - opts.slack).epsilon(1e-12));
  // rho = 0.75: 2 lambda_min = 0.5
  const SMatrix s2 = solve_equicorrelated(equi_model(6, 0.75), opts);
  for (int j = 0; j < 6; ++j)
    CHECK(s2.s(j) == doctest::Approx(0.5 * (1.0 - opts.slack)).epsilon(1e-9));
  // rho = 0.25: 2 lambda_min = 1.5 clips at 1
  const SMatrix s3 = solve_equicorrelated(equi_model(6, 0.25), opts);
  for (int j = 0; j < 6; ++j) CHECK(s3.s(j) == doctest::Approx(1.0 - opts.slack).epsilon(1e-9));
}

TEST_CASE("solve_sdp: identity saturates the box bound exactly") {
  const SMatrix s = solve_sdp(CovModel(Eigen::MatrixXd::Identity(5, 5)));
  for (int j = 0; j < 5; ++j) CHECK(s.s(j) == 1.0);
}

TEST_CASE("solve_sdp: constant-correlation closed form") {
  // For rho >= 0.5 the optimum is s_j = 2 - 2 rho.
  const SMatrix s = solve_sdp(equi_model(50, 0.6));
  for (int j = 0; j < 50; ++j) CHECK(s.s(j) == doctest::Approx(0.8).epsilon(1e-3));
  // For rho < 0.5 the box bound s_j = 1 is feasible and optimal.
  const SMatrix s2 = solve_sdp(equi_model(20, 0.3));
  for (int j = 0; j < 20; ++j) CHECK(s2.s(j) == doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("solve_sdp: matches the interior-point oracle") {
  // Well-conditioned geometry: coordinatewise agreement.
  {
    const CovModel sigma(oracle::ar1_matrix(10, 0.3));
    const SMatrix s = solve_sdp(sigma, tight_opts());
    const Eigen::VectorXd ref = oracle::barrier_max_sum(sigma.matrix());
    CHECK((s.s - ref).cwiseAbs().maxCoeff() < 1e-5);
  }
  // Flatter geometries: the maximizer need not be unique, so compare the
  // objective value and verify feasibility instead of coordinates.
  RngStream rng(888, 0);
  std::vector<Eigen::MatrixXd> cases = {oracle::ar1_matrix(10, 0.5), oracle::ar1_matrix(10, 0.7),
                                        oracle::random_correlation(8, rng),
                                        oracle::random_correlation(8, rng)};
  for (const Eigen::MatrixXd& m : cases) {
    const CovModel sigma(m);
    const int p = sigma.dim();
    const SMatrix s = solve_sdp(sigma, tight_opts());
    CHECK((s.s.array() >= 0.0).all());
    CHECK((s.s.array() <= 1.0 + 1e-12).all());
    // feasible: 2 Sigma - diag(s) stays PSD (tiny negative tolerance for
    // the boundary-seeking polish)
    Eigen::MatrixXd d = 2.0 * sigma.matrix();
    d.diagonal() -= s.s;
    CHECK(oracle::dense_min_eig(d) > -1e-9);
    const double oracle_sum = oracle::barrier_max_sum(sigma.matrix()).sum();
    CHECK(oracle_sum - s.s.sum() < 1e-3 * p);
  }
}

TEST_CASE("solve_mvr: identity optimum is s = 1") {
  const SMatrix s = solve_mvr(CovModel(Eigen::MatrixXd::Identity(5, 5)), tight_opts());
  for (int j = 0; j < 5; ++j) CHECK(s.s(j) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("solve_mvr: two-dimensional case against an exhaustive scan") {
  // By symmetry the optimum of the p = 2, rho = 0.6 problem has equal
  // coordinates, reducing the loss to
  //   f(c) = 2/c + 1/(0.8 - c) + 1/(3.2 - c)  on 0 < c < 0.8.
  double best_c = 0.0;
  double best_val = oracle::kInf;
  const int grid_n = 1000000;
  for (int i = 1; i < grid_n; ++i) {
    const double c = 0.8 * i / grid_n;
    const double val = 2.0 / c + 1.0 / (0.8 - c) + 1.0 / (3.2 - c);
    if (val < best_val) {
      best_val = val;
      best_c = c;
    }
  }
  const SMatrix s = solve_mvr(equi_model(2, 0.6), tight_opts());
  CHECK(s.s(0) == doctest::Approx(best_c).epsilon(1e-4));
  CHECK(s.s(1) == doctest::Approx(best_c).epsilon(1e-4));
}

TEST_CASE("solve_mvr and solve_maxent: agree with brute-force grid minimization") {
  for (std::uint64_t c = 0; c < 3; ++c) {
    RngStream rng(777, c);
    const int p = c < 2 ? 2 : 3;
    const Eigen::MatrixXd m = oracle::random_correlation(p, rng);
    const CovModel sigma(m);
    const SMatrix mvr = solve_mvr(sigma, tight_opts());
    const Eigen::VectorXd mvr_ref = oracle::grid_minimize(
        m, [&](const Eigen::VectorXd& v) { return oracle::mvr_loss(m, v); });
    CHECK((mvr.s - mvr_ref).cwiseAbs().maxCoeff() < 1e-3);
    const SMatrix me = solve_maxent(sigma, tight_opts());
    const Eigen::VectorXd me_ref = oracle::grid_minimize(
        m, [&](const Eigen::VectorXd& v) { return oracle::maxent_loss(m, v); });
    CHECK((me.s - me_ref).cwiseAbs().maxCoeff() < 1e-3);
  }
}

TEST_CASE("mvr_coordinate_root: symmetric case lands at zero") {
  CHECK(mvr_coordinate_root(-1.0, 1.0, 1.0) == doctest::Approx(0.0));
}

TEST_CASE("mvr_coordinate_root: minimizes the coordinate objective") {
  RngStream rng(771, 0);
  for (int trial = 0; trial < 1000; ++trial) {
    const double c_d = rng.uniform(0.1, 2.0);
    // realizable curvatures satisfy -c_n >= c_d^2 (Cauchy-Schwarz)
    const double c_n = -c_d * c_d * (1.0 + rng.uniform(0.0, 3.0));
    const double s_jj = rng.uniform(0.05, 1.5);
    const double root = mvr_coordinate_root(c_n, c_d, s_jj);
    const double hi = 1.0 / c_d;
    REQUIRE(root > -s_jj);
    REQUIRE(root < hi);
    // local minimality, probed at two scales inside the feasible interval
    const double gap = std::min(root + s_jj, hi - root);
    for (double frac : {1e-3, 1e-7}) {
      const double h = frac * gap;
      const double at = coordinate_objective(root, c_n, c_d, s_jj);
      CHECK(at <= coordinate_objective(root + h, c_n, c_d, s_jj) + 1e-12 * std::abs(at));
      CHECK(at <= coordinate_objective(root - h, c_n, c_d, s_jj) + 1e-12 * std::abs(at));
    }
  }
}

TEST_CASE("solve_maxent: identity optimum is s = 1") {
  const SMatrix s = solve_maxent(CovModel(Eigen::MatrixXd::Identity(5, 5)), tight_opts());
  for (int j = 0; j < 5; ++j) CHECK(s.s(j) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("solve_mvr vs solve_maxent: solutions draw together as dimension grows") {
  // On constant-correlation inputs both optima approach (1 - rho) I, so the
  // largest coordinate gap between the two solutions should shrink with p.
  double prev = oracle::kInf;
  for (int p : {10, 50, 200}) {
    const CovModel sigma = equi_model(p, 0.5);
    const SMatrix mvr = solve_mvr(sigma, tight_opts());
    const SMatrix me = solve_maxent(sigma, tight_opts());
    const double gap = (mvr.s - me.s).cwiseAbs().maxCoeff();
    CHECK(gap < prev);
    prev = gap;
  }
}

TEST_CASE("scale_smatrix: scales exactly and preserves joint feasibility") {
  RngStream rng(772, 0);
  const Eigen::MatrixXd m = oracle::random_correlation(6, rng);
  const CovModel sigma(m);
  const SMatrix s = solve_mvr(sigma);
  const SMatrix scaled = scale_smatrix(s, 0.99);
  CHECK((scaled.s - 0.99 * s.s).norm() == 0.0);
  CHECK(oracle::dense_min_eig(oracle::joint_cov(m, scaled.s)) > -1e-12);
  const SMatrix zero = scale_smatrix(s, 0.0);
  CHECK(zero.s.norm() == 0.0);
  CHECK_THROWS_AS(scale_smatrix(s, -0.1), InvalidParams);
  CHECK_THROWS_AS(scale_smatrix(s, 1.5), InvalidParams);
}

TEST_CASE("solve_blockdiag: equals the direct solve on the assembled matrix") {
  const Eigen::MatrixXd b1 = oracle::equi_matrix(5, 0.5);
  const Eigen::MatrixXd b2 = oracle::ar1_matrix(5, 0.8);

  const auto assemble = [](const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(a.rows() + b.rows(), a.rows() + b.rows());
    m.topLeftCorner(a.rows(), a.rows()) = a;
    m.bottomRightCorner(b.rows(), b.rows()) = b;
    return m;
  };

  const SolverOptions opts = tight_opts();
  for (SMatrixMethod method : {SMatrixMethod::mvr, SMatrixMethod::maxent, SMatrixMethod::sdp}) {
    // two identical blocks
    const SMatrix split1 =
        solve_blockdiag({CovModel(b1), CovModel(b1)}, method, opts);
    const SMatrix direct1 = solve_smatrix(CovModel(assemble(b1, b1)), method, opts);
    CHECK((split1.s - direct1.s).cwiseAbs().maxCoeff() < 1e-6);
    // two different blocks
    const SMatrix split2 =
        solve_blockdiag({CovModel(b1), CovModel(b2)}, method, opts);
    const SMatrix direct2 = solve_smatrix(CovModel(assemble(b1, b2)), method, opts);
    CHECK((split2.s - direct2.s).cwiseAbs().maxCoeff() < 1e-6);
    // a single block is the direct solve verbatim
    const SMatrix split3 = solve_blockdiag({CovModel(b2)}, method, opts);
    const SMatrix direct3 = solve_smatrix(CovModel(b2), method, opts);
    CHECK((split3.s - direct3.s).cwiseAbs().maxCoeff() == 0.0);
  }
  CHECK_THROWS_AS(solve_blockdiag({}, SMatrixMethod::mvr), InvalidParams);
}

TEST_CASE("approx_then_linesearch: whole-dimension partition recovers the exact solve") {
  RngStream rng(773, 0);
  const Eigen::MatrixXd m = oracle::random_correlation(8, rng);
  const CovModel sigma(m);
  for (SMatrixMethod method : {SMatrixMethod::mvr, SMatrixMethod::maxent}) {
    const SMatrix approx = approx_then_linesearch(sigma, {8}, method);
    const SMatrix exact = solve_smatrix(sigma, method);
    CHECK((approx.s - exact.s).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("approx_then_linesearch: singleton partition is feasible and no better than exact") {
  const CovModel sigma = equi_model(10, 0.4);
  for (SMatrixMethod method : {SMatrixMethod::mvr, SMatrixMethod::maxent}) {
    const SMatrix approx = approx_then_linesearch(sigma, std::vector<int>(10, 1), method);
    CHECK(oracle::strictly_feasible(sigma.matrix(), approx.s));
    const SMatrix exact = solve_smatrix(sigma, method, tight_opts());
    if (method == SMatrixMethod::mvr) {
      CHECK(oracle::mvr_loss(sigma.matrix(), approx.s) >=
            oracle::mvr_loss(sigma.matrix(), exact.s) - 1e-9);
    } else {
      CHECK(oracle::maxent_loss(sigma.matrix(), approx.s) >=
            oracle::maxent_loss(sigma.matrix(), exact.s) - 1e-9);
    }
  }
  CHECK_THROWS_AS(approx_then_linesearch(sigma, {5, 4}, SMatrixMethod::mvr), InvalidParams);
  CHECK_THROWS_AS(approx_then_linesearch(sigma, {10}, SMatrixMethod::sdp), InvalidParams);
}

TEST_CASE("loss_report: identity with s = 1") {
  const CovModel sigma(Eigen::MatrixXd::Identity(7, 7));
  const SMatrix s{Eigen::VectorXd::Ones(7), 7, 0.0};
  const LossReport rep = loss_report(sigma, s);
  CHECK(rep.mvr == doctest::Approx(14.0).epsilon(1e-12));
  CHECK(rep.maxent == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
  CHECK(rep.mac == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
}

TEST_CASE("loss_report: constant-correlation closed form") {
  const int p = 12;
  const double rho = 0.45;
  const CovModel sigma = equi_model(p, rho);
  const SMatrix s{Eigen::VectorXd::Constant(p, 1.0 - rho), p, 0.0};
  const LossReport rep = loss_report(sigma, s);
  // eigenvalues of the joint covariance: 1 - rho with multiplicity 2p - 1
  // and 1 - rho + 2 p rho once
  const double expected = (2.0 * p - 1.0) / (1.0 - rho) + 1.0 / (2.0 * p * rho + 1.0 - rho);
  CHECK(rep.mvr == doctest::Approx(expected).epsilon(1e-10));
  CHECK(rep.mac == doctest::Approx(rho).epsilon(1e-12));
}

TEST_CASE("loss_report: dense-inverse oracle on random inputs") {
  RngStream rng(774, 0);
  for (int p : {3, 9, 20}) {
    const Eigen::MatrixXd m = oracle::random_correlation(p, rng);
    const CovModel sigma(m);
    const SMatrix s = solve_maxent(sigma);
    const LossReport rep = loss_report(sigma, s);
    const Eigen::MatrixXd g = oracle::joint_cov(m, s.s);
    CHECK(rep.mvr == doctest::Approx(g.inverse().trace()).epsilon(1e-8));
    const Eigen::MatrixXd l = oracle::dense_chol(g);
    const double logdet = 2.0 * l.diagonal().array().log().sum();
    CHECK(rep.maxent == doctest::Approx(-logdet).epsilon(1e-8));
  }
}

TEST_CASE("loss_report: infeasible s is rejected") {
  const CovModel sigma = equi_model(4, 0.5);
  CHECK_THROWS_AS(loss_report(sigma, SMatrix{Eigen::VectorXd::Zero(4), 4, 0.0}),
                  DegenerateCovariance);
  CHECK_THROWS_AS(loss_report(sigma, SMatrix{Eigen::VectorXd::Constant(4, 1.8), 4, 0.0}),
                  DegenerateCovariance);
  CHECK_THROWS_AS(loss_report(sigma, SMatrix{Eigen::VectorXd::Ones(3), 3, 0.0}), InvalidParams);
}

TEST_CASE("coordinate solvers: every intermediate step is feasible and descending") {
  RngStream rng(775, 0);
  const Eigen::MatrixXd m = oracle::random_correlation(6, rng);
  const CovModel sigma(m);
  for (SMatrixMethod method : {SMatrixMethod::mvr, SMatrixMethod::maxent}) {
    const auto loss = [&](const Eigen::VectorXd& v) {
      return method == SMatrixMethod::mvr ? oracle::mvr_loss(m, v) : oracle::maxent_loss(m, v);
    };
    double prev = oracle::kInf;
    int steps = 0;
    SolverOptions opts;
    opts.on_coordinate_step = [&](const Eigen::VectorXd& v) {
      const double cur = loss(v);
      CHECK(std::isfinite(cur));  // feasible at every step
      CHECK(cur <= prev + 1e-10 * std::abs(prev));
      prev = cur;
      ++steps;
    };
    solve_smatrix(sigma, method, opts);
    CHECK(steps >= 6);
  }
}

TEST_CASE("solvers: permutation equivariance") {
  RngStream rng(776, 0);
  const int p = 7;
  const Eigen::MatrixXd m = oracle::random_correlation(p, rng);
  Eigen::PermutationMatrix<Eigen::Dynamic> perm(p);
  perm.setIdentity();
  std::vector<int> order = {3, 0, 6, 1, 5, 2, 4};
  for (int i = 0; i < p; ++i) perm.indices()(i) = order[i];
  const Eigen::MatrixXd mp = perm * m * perm.transpose();

  const SolverOptions opts = tight_opts();
  for (SMatrixMethod method : {SMatrixMethod::mvr, SMatrixMethod::maxent}) {
    const Eigen::VectorXd direct = solve_smatrix(CovModel(m), method, opts).s;
    const Eigen::VectorXd permuted = solve_smatrix(CovModel(mp), method, opts).s;
    CHECK((perm * direct - permuted).cwiseAbs().maxCoeff() < 1e-6);
  }
  // boundary-seeking solver on a geometry with a unique optimum
  const Eigen::MatrixXd ar = oracle::ar1_matrix(p, 0.3);
  const Eigen::MatrixXd arp = perm * ar * perm.transpose();
  const Eigen::VectorXd direct = solve_sdp(CovModel(ar), opts).s;
  const Eigen::VectorXd permuted = solve_sdp(CovModel(arp), opts).s;
  CHECK((perm * direct - permuted).cwiseAbs().maxCoeff() < 1e-4);
}

TEST_CASE("estimate_covariance: recovers a known covariance from a large sample") {
  RngStream rng(778, 0);
  const Eigen::MatrixXd x = oracle::normal_matrix(10000, 5, rng);
  for (CovEstimator est : {CovEstimator::mle, CovEstimator::ledoit_wolf}) {
    const CovModel fit = estimate_covariance(x, est);
    CHECK(fit.positive_definite());
    CHECK((fit.matrix() - Eigen::MatrixXd::Identity(5, 5)).cwiseAbs().maxCoeff() < 0.05);
    for (int j = 0; j < 5; ++j) CHECK(fit(j, j) == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("estimate_covariance: degenerate data is rejected") {
  CHECK_THROWS_AS(estimate_covariance(Eigen::MatrixXd::Ones(50, 4), CovEstimator::mle),
                  DegenerateData);
  CHECK_THROWS_AS(estimate_covariance(Eigen::MatrixXd::Ones(1, 4), CovEstimator::ledoit_wolf),
                  DegenerateData);
}

TEST_CASE("estimate_covariance: rank-deficient samples are floored to usable models") {
  RngStream rng(779, 0);
  const Eigen::MatrixXd x = oracle::normal_matrix(50, 100, rng);  // n < p
  for (CovEstimator est : {CovEstimator::mle, CovEstimator::ledoit_wolf}) {
    const CovModel fit = estimate_covariance(x, est);
    CHECK(fit.positive_definite());
    CHECK(fit.min_eigenvalue() > 5e-4);
    for (int j = 0; j < 100; ++j) CHECK(fit(j, j) == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("solve_smatrix: one-dimensional covariance") {
  const CovModel sigma(Eigen::MatrixXd::Identity(1, 1));
  CHECK(solve_mvr(sigma, tight_opts()).s(0) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(solve_maxent(sigma, tight_opts()).s(0) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(solve_sdp(sigma).s(0) == 1.0);
}
