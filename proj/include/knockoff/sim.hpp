#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "knockoff/covariance.hpp"
#include "knockoff/filter.hpp"
#include "knockoff/rng.hpp"
#include "knockoff/samplers.hpp"
#include "knockoff/smatrix.hpp"

namespace knockoff {

/// Covariance families for synthetic designs. ar1_corr shares the ar1
/// matrix law; it differs downstream by clustering the non-null
/// coefficients into one contiguous run.
enum class CovKind { equi, block_equi, ar1, ar1_corr, er_cov, er_prec };

enum class ResponseKind {
  gaussian_linear,
  binomial_probit_sigmoid,
  cos,
  cubic,
  pairint,
  quadratic,
  trunclinear
};

/// Whether the sampler sees the true covariance or an estimate of it.
enum class CovEstimation { oracle, mle, ledoit_wolf };

struct CovParams {
  double rho = 0.5;          ///< correlation for equi / block_equi
  int block_size = 5;        ///< block edge for block_equi (must divide p)
  double beta_a = 3.0;       ///< Beta shape a for ar1 step correlations
  double beta_b = 1.0;       ///< Beta shape b for ar1 step correlations
  double fixed_rho = -1.0;   ///< ar1: >= 0 pins every step correlation to this value
  double er_sparsity = 0.2;  ///< edge probability for the sparse random families
  double er_mag_lo = 0.1;    ///< lower magnitude bound for sparse entries
  double er_mag_hi = 1.0;    ///< upper magnitude bound for sparse entries

  void validate(CovKind kind) const;
};

/// Draw a unit-diagonal correlation-scale covariance from the named family.
/// Every family passes through the eigenvalue floor in CovModel::regularized,
/// so the result is always comfortably positive definite.
CovModel gen_covariance(CovKind kind, const CovParams& params, int p, RngStream& rng);

/// k non-null coefficients with |beta_j| ~ Unif[delta/2, delta] and random
/// signs; positions uniform without replacement, or one contiguous run when
/// clustered. Remaining entries are exactly zero.
Eigen::VectorXd gen_coefficients(int p, int k, double delta, bool clustered, RngStream& rng);

/// Draw the response row by row from the configured conditional law: unit
/// Gaussian noise around the conditional mean, or a Bernoulli draw for the
/// sigmoid case. The pairint mean groups the non-null features into disjoint
/// pairs left to right and multiplies each pair, weighted by the first
/// member's coefficient; it requires an even number of non-nulls.
Eigen::VectorXd gen_response(const Eigen::MatrixXd& x, const Eigen::VectorXd& beta,
                             ResponseKind kind, RngStream& rng);

struct ExperimentConfig {
  int p = 100;
  int n = 300;
  CovKind cov_kind = CovKind::equi;
  CovParams cov_params;
  ResponseKind response_kind = ResponseKind::gaussian_linear;
  double coef_size = 1.0;  ///< delta in the coefficient law
  int k = 0;               ///< number of non-nulls
  SMatrixMethod method = SMatrixMethod::mvr;
  KnockoffKind knockoff_kind = KnockoffKind::model_x;
  StatKind stat = StatKind::lcd;
  StatOptions stat_options;
  double q = 0.1;
  int replications = 1;
  std::uint64_t base_seed = 0;
  CovEstimation cov_estimation = CovEstimation::oracle;
  SolverOptions solver;
  /// Worker threads for the replication loop. Not part of the experiment
  /// identity: results are byte-identical for any value.
  int threads = 1;

  void validate() const;
  /// FNV-1a hash of the canonical serialization (threads excluded).
  std::uint64_t hash() const;
};

/// Canonical key=value serialization of every semantic config field, in a
/// fixed order. Feeds the config hash and round-trips through parse_config.
std::string serialize_config(const ExperimentConfig& cfg);

/// Parse a flat key=value config (one pair per line, '#' comments, optional
/// double quotes around values). Unknown keys are rejected. Missing keys
/// keep their defaults. The parsed config is validated before return.
ExperimentConfig parse_config(const std::string& text);

struct ExperimentRecord {
  std::uint64_t config_hash = 0;
  int replication = 0;
  std::uint64_t seed = 0;
  double power = 0.0;
  double fdp = 0.0;
  double threshold = 0.0;
  double runtime_ms = 0.0;
  bool ok = true;
  std::string error;  ///< empty when ok
};

/// Run every replication of the configured experiment. Each replication owns
/// RngStream(base_seed, replication) and is independent of the others, so the
/// records are identical for any thread count; a replication that throws is
/// flagged (ok = false, NaN metrics) rather than aborting the run.
std::vector<ExperimentRecord> run_experiment(const ExperimentConfig& cfg);

/// Write records as CSV with header
///   method,cov_kind,rho,n,p,q,stat,replication,seed,power,fdp,threshold,runtime_ms
/// using shortest round-trip decimal formatting. The config supplies the
/// experiment-level columns.
void emit_csv(const std::vector<ExperimentRecord>& records, const ExperimentConfig& cfg,
              const std::string& path);

// Enum <-> string conversions shared by the config parser, CSV writer, and CLI.
std::string to_string(CovKind kind);
std::string to_string(ResponseKind kind);
std::string to_string(CovEstimation kind);
std::string to_string(SMatrixMethod method);
std::string to_string(KnockoffKind kind);
std::string to_string(StatKind kind);
CovKind cov_kind_from_string(const std::string& name);
ResponseKind response_kind_from_string(const std::string& name);
CovEstimation cov_estimation_from_string(const std::string& name);
SMatrixMethod smatrix_method_from_string(const std::string& name);
KnockoffKind knockoff_kind_from_string(const std::string& name);
StatKind stat_kind_from_string(const std::string& name);

}  // namespace knockoff
