#include "knockoff/sim.hpp"

#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <optional>
#include <sstream>
#include <thread>

#include "knockoff/linalg.hpp"
#include "knockoff/matrix_io.hpp"

namespace knockoff {

std::string to_string(CovKind kind) {
  switch (kind) {
    case CovKind::equi: return "equi";
    case CovKind::block_equi: return "block_equi";
    case CovKind::ar1: return "ar1";
    case CovKind::ar1_corr: return "ar1_corr";
    case CovKind::er_cov: return "er_cov";
    case CovKind::er_prec: return "er_prec";
  }
  throw InvalidKind("unknown covariance kind");
}

std::string to_string(ResponseKind kind) {
  switch (kind) {
    case ResponseKind::gaussian_linear: return "gaussian_linear";
    case ResponseKind::binomial_probit_sigmoid: return "binomial_probit_sigmoid";
    case ResponseKind::cos: return "cos";
    case ResponseKind::cubic: return "cubic";
    case ResponseKind::pairint: return "pairint";
    case ResponseKind::quadratic: return "quadratic";
    case ResponseKind::trunclinear: return "trunclinear";
  }
  throw InvalidKind("unknown response kind");
}

std::string to_string(CovEstimation kind) {
  switch (kind) {
    case CovEstimation::oracle: return "oracle";
    case CovEstimation::mle: return "mle";
    case CovEstimation::ledoit_wolf: return "ledoit_wolf";
  }
  throw InvalidKind("unknown covariance estimation kind");
}

std::string to_string(SMatrixMethod method) {
  switch (method) {
    case SMatrixMethod::mvr: return "mvr";
    case SMatrixMethod::maxent: return "maxent";
    case SMatrixMethod::sdp: return "sdp";
    case SMatrixMethod::equicorrelated: return "equicorrelated";
  }
  throw InvalidKind("unknown s-matrix method");
}

std::string to_string(KnockoffKind kind) {
  switch (kind) {
    case KnockoffKind::model_x: return "model_x";
    case KnockoffKind::second_order: return "second_order";
    case KnockoffKind::fixed_x: return "fixed_x";
  }
  throw InvalidKind("unknown knockoff kind");
}

std::string to_string(StatKind kind) {
  switch (kind) {
    case StatKind::lcd: return "lcd";
    case StatKind::ridge: return "ridge";
    case StatKind::ols: return "ols";
    case StatKind::lsm: return "lsm";
  }
  throw InvalidKind("unknown statistic kind");
}

CovKind cov_kind_from_string(const std::string& name) {
  if (name == "equi") return CovKind::equi;
  if (name == "block_equi") return CovKind::block_equi;
  if (name == "ar1") return CovKind::ar1;
  if (name == "ar1_corr") return CovKind::ar1_corr;
  if (name == "er_cov") return CovKind::er_cov;
  if (name == "er_prec") return CovKind::er_prec;
  throw InvalidKind("unknown covariance kind: " + name);
}

ResponseKind response_kind_from_string(const std::string& name) {
  if (name == "gaussian_linear") return ResponseKind::gaussian_linear;
  if (name == "binomial_probit_sigmoid") return ResponseKind::binomial_probit_sigmoid;
  if (name == "cos") return ResponseKind::cos;
  if (name == "cubic") return ResponseKind::cubic;
  if (name == "pairint") return ResponseKind::pairint;
  if (name == "quadratic") return ResponseKind::quadratic;
  if (name == "trunclinear") return ResponseKind::trunclinear;
  throw InvalidKind("unknown response kind: " + name);
}

CovEstimation cov_estimation_from_string(const std::string& name) {
  if (name == "oracle") return CovEstimation::oracle;
  if (name == "mle") return CovEstimation::mle;
  if (name == "ledoit_wolf") return CovEstimation::ledoit_wolf;
  throw InvalidKind("unknown covariance estimation kind: " + name);
}

SMatrixMethod smatrix_method_from_string(const std::string& name) {
  if (name == "mvr") return SMatrixMethod::mvr;
  if (name == "maxent") return SMatrixMethod::maxent;
  if (name == "sdp") return SMatrixMethod::sdp;
  if (name == "equicorrelated") return SMatrixMethod::equicorrelated;
  throw InvalidKind("unknown s-matrix method: " + name);
}

KnockoffKind knockoff_kind_from_string(const std::string& name) {
  if (name == "model_x") return KnockoffKind::model_x;
  if (name == "second_order") return KnockoffKind::second_order;
  if (name == "fixed_x") return KnockoffKind::fixed_x;
  throw InvalidKind("unknown knockoff kind: " + name);
}

StatKind stat_kind_from_string(const std::string& name) {
  if (name == "lcd") return StatKind::lcd;
  if (name == "ridge") return StatKind::ridge;
  if (name == "ols") return StatKind::ols;
  if (name == "lsm") return StatKind::lsm;
  throw InvalidKind("unknown statistic kind: " + name);
}

void CovParams::validate(CovKind kind) const {
  switch (kind) {
    case CovKind::equi:
    case CovKind::block_equi:
      if (rho < 0.0 || rho >= 1.0) {
        throw InvalidParams("cov params: rho must lie in [0, 1)");
      }
      if (kind == CovKind::block_equi && block_size < 1) {
        throw InvalidParams("cov params: block_size must be positive");
      }
      break;
    case CovKind::ar1:
    case CovKind::ar1_corr:
      if (fixed_rho >= 1.0) {
        throw InvalidParams("cov params: fixed_rho must be below 1");
      }
      if (fixed_rho < 0.0 && (!(beta_a > 0.0) || !(beta_b > 0.0))) {
        throw InvalidParams("cov params: beta_a and beta_b must be positive");
      }
      break;
    case CovKind::er_cov:
    case CovKind::er_prec:
      if (er_sparsity < 0.0 || er_sparsity > 1.0) {
        throw InvalidParams("cov params: er_sparsity must lie in [0, 1]");
      }
      if (!(er_mag_lo > 0.0) || er_mag_lo > er_mag_hi) {
        throw InvalidParams("cov params: need 0 < er_mag_lo <= er_mag_hi");
      }
      break;
  }
}

CovModel gen_covariance(CovKind kind, const CovParams& params, int p, RngStream& rng) {
  if (p < 1) throw InvalidParams("gen_covariance: p must be positive");
  params.validate(kind);
  switch (kind) {
    case CovKind::equi: {
      Eigen::MatrixXd m = Eigen::MatrixXd::Constant(p, p, params.rho);
      m.diagonal().setOnes();
      return CovModel::regularized(m);
    }
    case CovKind::block_equi: {
      if (p % params.block_size != 0) {
        throw InvalidParams("gen_covariance: block_size must divide p");
      }
      Eigen::MatrixXd m = Eigen::MatrixXd::Zero(p, p);
      for (int b = 0; b < p; b += params.block_size) {
        m.block(b, b, params.block_size, params.block_size).setConstant(params.rho);
      }
      m.diagonal().setOnes();
      return CovModel::regularized(m);
    }
    case CovKind::ar1:
    case CovKind::ar1_corr: {
      // Markov chain X_j = r_j X_{j-1} + sqrt(1 - r_j^2) Z_j, so the
      // correlation between positions j < k is the product of the step
      // correlations r_{j+1} .. r_k.
      std::vector<double> step(p, 0.0);
      for (int j = 1; j < p; ++j) {
        step[j] = params.fixed_rho >= 0.0 ? params.fixed_rho
                                          : rng.beta(params.beta_a, params.beta_b);
      }
      Eigen::MatrixXd m(p, p);
      for (int j = 0; j < p; ++j) {
        m(j, j) = 1.0;
        double acc = 1.0;
        for (int t = j + 1; t < p; ++t) {
          acc *= step[t];
          m(j, t) = m(t, j) = acc;
        }
      }
      return CovModel::regularized(m);
    }
    case CovKind::er_cov:
    case CovKind::er_prec: {
      // Sparse symmetric base with zero diagonal: each upper-triangular
      // entry is present with probability er_sparsity and carries a random
      // sign and a Unif(mag_lo, mag_hi) magnitude.
      Eigen::MatrixXd a = Eigen::MatrixXd::Zero(p, p);
      for (int i = 0; i < p; ++i) {
        for (int j = i + 1; j < p; ++j) {
          if (!rng.bernoulli(params.er_sparsity)) continue;
          const double mag = rng.uniform(params.er_mag_lo, params.er_mag_hi);
          a(i, j) = a(j, i) = rng.bernoulli(0.5) ? mag : -mag;
        }
      }
      // Shift the spectrum so the smallest eigenvalue lands exactly at 0.1.
      const double lmin = min_eigenvalue(SymMatrix(a));
      a.diagonal().array() += 0.1 - lmin;
      if (kind == CovKind::er_cov) {
        return CovModel::regularized(a);
      }
      // er_prec: the shifted matrix is the precision matrix.
      const Eigen::MatrixXd sigma =
          Eigen::LLT<Eigen::MatrixXd>(a).solve(Eigen::MatrixXd::Identity(p, p));
      return CovModel::regularized(sigma);
    }
  }
  throw InvalidKind("gen_covariance: unknown covariance kind");
}

Eigen::VectorXd gen_coefficients(int p, int k, double delta, bool clustered, RngStream& rng) {
  if (p < 1) throw InvalidParams("gen_coefficients: p must be positive");
  if (k < 0 || k > p) throw InvalidParams("gen_coefficients: k must lie in [0, p]");
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  if (k == 0) return beta;
  if (!(delta > 0.0)) throw InvalidParams("gen_coefficients: delta must be positive");

  std::vector<int> support;
  support.reserve(k);
  if (clustered) {
    const int start = static_cast<int>(rng.uniform_int(0, p - k));
    for (int j = 0; j < k; ++j) support.push_back(start + j);
  } else {
    std::vector<int> idx(p);
    std::iota(idx.begin(), idx.end(), 0);
    for (int i = 0; i < k; ++i) {
      const int j = static_cast<int>(rng.uniform_int(i, p - 1));
      std::swap(idx[i], idx[j]);
      support.push_back(idx[i]);
    }
  }
  for (int j : support) {
    const double mag = rng.uniform(delta / 2.0, delta);
    beta(j) = rng.bernoulli(0.5) ? mag : -mag;
  }
  return beta;
}

Eigen::VectorXd gen_response(const Eigen::MatrixXd& x, const Eigen::VectorXd& beta,
                             ResponseKind kind, RngStream& rng) {
  const int n = static_cast<int>(x.rows());
  const int p = static_cast<int>(x.cols());
  if (beta.size() != p) {
    throw InvalidParams("gen_response: coefficient length must match the column count");
  }

  Eigen::VectorXd mu(n);
  switch (kind) {
    case ResponseKind::gaussian_linear:
      mu = x * beta;
      break;
    case ResponseKind::binomial_probit_sigmoid: {
      const Eigen::VectorXd eta = x * beta;
      Eigen::VectorXd y(n);
      for (int i = 0; i < n; ++i) {
        y(i) = static_cast<double>(rng.bernoulli(1.0 / (1.0 + std::exp(-eta(i)))));
      }
      return y;
    }
    case ResponseKind::cos:
      mu = x.array().cos().matrix() * beta;
      break;
    case ResponseKind::cubic:
      mu = x.array().cube().matrix() * beta - x * beta;
      break;
    case ResponseKind::quadratic:
      mu = x.array().square().matrix() * beta;
      break;
    case ResponseKind::trunclinear: {
      mu.setZero();
      for (int j = 0; j < p; ++j) {
        if (beta(j) == 0.0) continue;
        const double sgn = beta(j) > 0.0 ? 1.0 : -1.0;
        for (int i = 0; i < n; ++i) {
          if (x(i, j) * beta(j) > 0.0) mu(i) += sgn;
        }
      }
      break;
    }
    case ResponseKind::pairint: {
      std::vector<int> nz;
      for (int j = 0; j < p; ++j) {
        if (beta(j) != 0.0) nz.push_back(j);
      }
      if (nz.size() % 2 != 0) {
        throw InvalidParams("gen_response: pairint requires an even number of non-nulls");
      }
      // Disjoint pairs, left to right; each pair is weighted by the
      // coefficient of its first member.
      mu.setZero();
      for (std::size_t t = 0; t + 1 < nz.size(); t += 2) {
        mu += beta(nz[t]) * x.col(nz[t]).cwiseProduct(x.col(nz[t + 1]));
      }
      break;
    }
    default:
      throw InvalidKind("gen_response: unknown response kind");
  }

  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) y(i) = mu(i) + rng.normal();
  return y;
}

void ExperimentConfig::validate() const {
  if (p < 1 || n < 1) throw InvalidParams("config: p and n must be positive");
  if (k < 0 || k > p) throw InvalidParams("config: k must lie in [0, p]");
  if (!(q > 0.0) || !(q < 1.0)) throw InvalidParams("config: q must lie in (0, 1)");
  if (replications < 1) throw InvalidParams("config: replications must be >= 1");
  if (threads < 1) throw InvalidParams("config: threads must be >= 1");
  if (k > 0 && !(coef_size > 0.0)) {
    throw InvalidParams("config: coef_size must be positive when k > 0");
  }
  if (stat_options.lambda_points < 1) {
    throw InvalidParams("config: lambda_points must be >= 1");
  }
  if (stat_options.max_passes < 1) {
    throw InvalidParams("config: max_passes must be >= 1");
  }
  if (stat_options.cv_folds < 2 || stat_options.cv_folds > n) {
    throw InvalidParams("config: cv_folds must lie in [2, n]");
  }
  if (!(stat_options.lambda_min_ratio > 0.0) || stat_options.lambda_min_ratio > 1.0) {
    throw InvalidParams("config: lambda_min_ratio must lie in (0, 1]");
  }
  if (cov_kind == CovKind::block_equi && p % cov_params.block_size != 0) {
    throw InvalidParams("config: block_size must divide p");
  }
  cov_params.validate(cov_kind);
  solver.validate();
}

std::string serialize_config(const ExperimentConfig& cfg) {
  std::ostringstream out;
  out << "p=" << cfg.p << '\n';
  out << "n=" << cfg.n << '\n';
  out << "cov_kind=" << to_string(cfg.cov_kind) << '\n';
  out << "rho=" << format_double(cfg.cov_params.rho) << '\n';
  out << "block_size=" << cfg.cov_params.block_size << '\n';
  out << "beta_a=" << format_double(cfg.cov_params.beta_a) << '\n';
  out << "beta_b=" << format_double(cfg.cov_params.beta_b) << '\n';
  out << "fixed_rho=" << format_double(cfg.cov_params.fixed_rho) << '\n';
  out << "er_sparsity=" << format_double(cfg.cov_params.er_sparsity) << '\n';
  out << "er_mag_lo=" << format_double(cfg.cov_params.er_mag_lo) << '\n';
  out << "er_mag_hi=" << format_double(cfg.cov_params.er_mag_hi) << '\n';
  out << "response_kind=" << to_string(cfg.response_kind) << '\n';
  out << "coef_size=" << format_double(cfg.coef_size) << '\n';
  out << "k=" << cfg.k << '\n';
  out << "method=" << to_string(cfg.method) << '\n';
  out << "knockoff_kind=" << to_string(cfg.knockoff_kind) << '\n';
  out << "stat=" << to_string(cfg.stat) << '\n';
  out << "lambda_points=" << cfg.stat_options.lambda_points << '\n';
  out << "lambda_min_ratio=" << format_double(cfg.stat_options.lambda_min_ratio) << '\n';
  out << "cv_folds=" << cfg.stat_options.cv_folds << '\n';
  out << "max_passes=" << cfg.stat_options.max_passes << '\n';
  out << "q=" << format_double(cfg.q) << '\n';
  out << "replications=" << cfg.replications << '\n';
  out << "base_seed=" << cfg.base_seed << '\n';
  out << "cov_estimation=" << to_string(cfg.cov_estimation) << '\n';
  out << "solver_n_iter=" << cfg.solver.n_iter << '\n';
  out << "solver_converge_tol=" << format_double(cfg.solver.converge_tol) << '\n';
  out << "solver_slack=" << format_double(cfg.solver.slack) << '\n';
  return out.str();
}

std::uint64_t ExperimentConfig::hash() const {
  const std::string text = serialize_config(*this);
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

long long parse_int(const std::string& key, const std::string& value) {
  long long out = 0;
  const auto res = std::from_chars(value.data(), value.data() + value.size(), out);
  if (res.ec != std::errc() || res.ptr != value.data() + value.size()) {
    throw InvalidParams("config: key '" + key + "' needs an integer, got '" + value + "'");
  }
  return out;
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  std::uint64_t out = 0;
  const auto res = std::from_chars(value.data(), value.data() + value.size(), out);
  if (res.ec != std::errc() || res.ptr != value.data() + value.size()) {
    throw InvalidParams("config: key '" + key + "' needs an unsigned integer, got '" + value +
                        "'");
  }
  return out;
}

double parse_real(const std::string& key, const std::string& value) {
  double out = 0.0;
  const auto res = std::from_chars(value.data(), value.data() + value.size(), out);
  if (res.ec != std::errc() || res.ptr != value.data() + value.size()) {
    throw InvalidParams("config: key '" + key + "' needs a number, got '" + value + "'");
  }
  return out;
}

}  // namespace

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig cfg;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const std::size_t hash_pos = line.find('#');
    if (hash_pos != std::string::npos) {
      // A '#' inside a quoted value is literal; anything else starts a comment.
      const std::size_t quote_open = line.find('"');
      if (quote_open == std::string::npos || hash_pos < quote_open) {
        line = line.substr(0, hash_pos);
      }
    }
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw InvalidParams("config: expected key=value, got '" + line + "'");
    }
    const std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') {
      value = value.substr(1, value.size() - 2);
    }
    if (key.empty() || value.empty()) {
      throw InvalidParams("config: empty key or value in '" + line + "'");
    }

    if (key == "p") cfg.p = static_cast<int>(parse_int(key, value));
    else if (key == "n") cfg.n = static_cast<int>(parse_int(key, value));
    else if (key == "cov_kind") cfg.cov_kind = cov_kind_from_string(value);
    else if (key == "rho") cfg.cov_params.rho = parse_real(key, value);
    else if (key == "block_size") cfg.cov_params.block_size = static_cast<int>(parse_int(key, value));
    else if (key == "beta_a") cfg.cov_params.beta_a = parse_real(key, value);
    else if (key == "beta_b") cfg.cov_params.beta_b = parse_real(key, value);
    else if (key == "fixed_rho") cfg.cov_params.fixed_rho = parse_real(key, value);
    else if (key == "er_sparsity") cfg.cov_params.er_sparsity = parse_real(key, value);
    else if (key == "er_mag_lo") cfg.cov_params.er_mag_lo = parse_real(key, value);
    else if (key == "er_mag_hi") cfg.cov_params.er_mag_hi = parse_real(key, value);
    else if (key == "response_kind") cfg.response_kind = response_kind_from_string(value);
    else if (key == "coef_size") cfg.coef_size = parse_real(key, value);
    else if (key == "k") cfg.k = static_cast<int>(parse_int(key, value));
    else if (key == "method") cfg.method = smatrix_method_from_string(value);
    else if (key == "knockoff_kind") cfg.knockoff_kind = knockoff_kind_from_string(value);
    else if (key == "stat") cfg.stat = stat_kind_from_string(value);
    else if (key == "lambda_points") cfg.stat_options.lambda_points = static_cast<int>(parse_int(key, value));
    else if (key == "lambda_min_ratio") cfg.stat_options.lambda_min_ratio = parse_real(key, value);
    else if (key == "cv_folds") cfg.stat_options.cv_folds = static_cast<int>(parse_int(key, value));
    else if (key == "max_passes") cfg.stat_options.max_passes = static_cast<int>(parse_int(key, value));
    else if (key == "q") cfg.q = parse_real(key, value);
    else if (key == "replications") cfg.replications = static_cast<int>(parse_int(key, value));
    else if (key == "base_seed") cfg.base_seed = parse_u64(key, value);
    else if (key == "cov_estimation") cfg.cov_estimation = cov_estimation_from_string(value);
    else if (key == "threads") cfg.threads = static_cast<int>(parse_int(key, value));
    else if (key == "solver_n_iter") cfg.solver.n_iter = static_cast<int>(parse_int(key, value));
    else if (key == "solver_converge_tol") cfg.solver.converge_tol = parse_real(key, value);
    else if (key == "solver_slack") cfg.solver.slack = parse_real(key, value);
    else throw InvalidParams("config: unknown key '" + key + "'");
  }
  cfg.validate();
  return cfg;
}

namespace {

Eigen::MatrixXd normal_matrix(int rows, int cols, RngStream& rng) {
  Eigen::MatrixXd m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) {
      m(i, j) = rng.normal();
    }
  }
  return m;
}

ExperimentRecord run_one(const ExperimentConfig& cfg, std::uint64_t cfg_hash, int r,
                         const CovModel* shared_sigma, const SMatrix* shared_s) {
  ExperimentRecord rec;
  rec.config_hash = cfg_hash;
  rec.replication = r;
  RngStream rng(cfg.base_seed, static_cast<std::uint64_t>(r));
  rec.seed = rng.seed_key();

  const auto t0 = std::chrono::steady_clock::now();
  try {
    const CovModel sigma = shared_sigma
                               ? *shared_sigma
                               : gen_covariance(cfg.cov_kind, cfg.cov_params, cfg.p, rng);
    const bool clustered = cfg.cov_kind == CovKind::ar1_corr;
    const Eigen::VectorXd beta = gen_coefficients(cfg.p, cfg.k, cfg.coef_size, clustered, rng);
    const Eigen::MatrixXd x =
        normal_matrix(cfg.n, cfg.p, rng) * sigma.cholesky_factor().transpose();
    const Eigen::VectorXd y = gen_response(x, beta, cfg.response_kind, rng);

    KnockoffDataset ds;
    if (cfg.knockoff_kind == KnockoffKind::fixed_x) {
      // The S-matrix must be feasible for the realized design's normalized
      // Gram matrix, so it is solved per replication.
      Eigen::MatrixXd xn = x;
      for (int j = 0; j < xn.cols(); ++j) {
        const double norm = xn.col(j).norm();
        if (!(norm > 0.0)) throw RankDeficientX("simulate: design column has zero norm");
        xn.col(j) /= norm;
      }
      const CovModel gram(xn.transpose() * xn);
      const SMatrix s = solve_smatrix(gram, cfg.method, cfg.solver);
      ds = construct_fixed_x(x, s, rng);
    } else {
      const CovModel model_sigma =
          cfg.cov_estimation == CovEstimation::oracle
              ? sigma
              : estimate_covariance(x, cfg.cov_estimation == CovEstimation::mle
                                           ? CovEstimator::mle
                                           : CovEstimator::ledoit_wolf);
      const SMatrix s = (shared_s != nullptr && cfg.cov_estimation == CovEstimation::oracle)
                            ? *shared_s
                            : solve_smatrix(model_sigma, cfg.method, cfg.solver);
      ds = cfg.knockoff_kind == KnockoffKind::model_x
               ? sample_gaussian_mx(x, model_sigma, s, rng)
               : sample_second_order(x, model_sigma, s, rng);
    }

    const StatVector w = compute_statistic(ds, y, cfg.stat, cfg.stat_options, rng);
    const SelectionResult sel = knockoff_threshold(w, cfg.q);
    const auto [fdp, power] = evaluate(sel, beta);
    rec.fdp = fdp;
    rec.power = power;
    rec.threshold = sel.threshold;
    rec.ok = true;
  } catch (const std::exception& e) {
    rec.ok = false;
    rec.error = e.what();
    rec.power = rec.fdp = rec.threshold = std::numeric_limits<double>::quiet_NaN();
  }
  rec.runtime_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return rec;
}

}  // namespace

std::vector<ExperimentRecord> run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();

  // Deterministic covariance families are built once and shared across
  // replications; the random families are redrawn inside each replication.
  std::optional<CovModel> shared_sigma;
  std::optional<SMatrix> shared_s;
  if (cfg.cov_kind == CovKind::equi || cfg.cov_kind == CovKind::block_equi) {
    RngStream unused(cfg.base_seed, 0);  // these families draw nothing
    shared_sigma.emplace(gen_covariance(cfg.cov_kind, cfg.cov_params, cfg.p, unused));
    if (cfg.knockoff_kind != KnockoffKind::fixed_x &&
        cfg.cov_estimation == CovEstimation::oracle) {
      shared_s = solve_smatrix(*shared_sigma, cfg.method, cfg.solver);
    }
  }

  const std::uint64_t cfg_hash = cfg.hash();
  std::vector<ExperimentRecord> records(cfg.replications);
  const CovModel* sigma_ptr = shared_sigma ? &*shared_sigma : nullptr;
  const SMatrix* s_ptr = shared_s ? &*shared_s : nullptr;

  std::atomic<int> next{0};
  const auto work = [&]() {
    for (;;) {
      const int r = next.fetch_add(1);
      if (r >= cfg.replications) return;
      records[r] = run_one(cfg, cfg_hash, r, sigma_ptr, s_ptr);
    }
  };

  const int workers = std::max(1, std::min(cfg.threads, cfg.replications));
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int t = 0; t < workers; ++t) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }
  return records;
}

void emit_csv(const std::vector<ExperimentRecord>& records, const ExperimentConfig& cfg,
              const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << "method,cov_kind,rho,n,p,q,stat,replication,seed,power,fdp,threshold,runtime_ms\n";
  for (const auto& rec : records) {
    out << to_string(cfg.method) << ',' << to_string(cfg.cov_kind) << ','
        << format_double(cfg.cov_params.rho) << ',' << cfg.n << ',' << cfg.p << ','
        << format_double(cfg.q) << ',' << to_string(cfg.stat) << ',' << rec.replication << ','
        << rec.seed << ',' << format_double(rec.power) << ',' << format_double(rec.fdp) << ','
        << format_double(rec.threshold) << ',' << format_double(rec.runtime_ms) << '\n';
  }
  if (!out) throw IoError("failed writing " + path);
}

}  // namespace knockoff
