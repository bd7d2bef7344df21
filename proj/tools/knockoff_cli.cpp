// Command-line front end: S-matrix solving, knockoff sampling, the selection
// filter, and the Monte Carlo experiment runner. Matrices are exchanged as
// comma-delimited numeric text, one row per line. Feature indices printed by
// the filter subcommand are 1-based.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <iterator>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "knockoff/matrix_io.hpp"
#include "knockoff/sim.hpp"

namespace {

Eigen::VectorXd read_vector(const std::string& path) {
  const Eigen::MatrixXd m = knockoff::read_matrix(path);
  if (m.cols() == 1) return m.col(0);
  if (m.rows() == 1) return m.row(0).transpose();
  throw knockoff::IoError(path + ": expected a single row or column");
}

knockoff::SMatrixMethod parse_method(const std::string& name) {
  if (name == "equi") return knockoff::SMatrixMethod::equicorrelated;
  return knockoff::smatrix_method_from_string(name);
}

int run_smatrix(const std::string& sigma_path, const std::string& method_name, int block_size,
                double gamma, const std::string& out_path) {
  const knockoff::CovModel sigma = knockoff::CovModel::regularized(knockoff::read_matrix(sigma_path));
  const knockoff::SMatrixMethod method = parse_method(method_name);
  knockoff::SolverOptions opts;

  knockoff::SMatrix s;
  if (block_size > 0) {
    if (method != knockoff::SMatrixMethod::mvr && method != knockoff::SMatrixMethod::maxent) {
      throw knockoff::InvalidParams("--block-size applies to the mvr and maxent methods only");
    }
    std::vector<int> sizes;
    for (int rem = sigma.dim(); rem > 0; rem -= block_size) {
      sizes.push_back(std::min(block_size, rem));
    }
    s = knockoff::approx_then_linesearch(sigma, sizes, method, opts);
  } else {
    s = knockoff::solve_smatrix(sigma, method, opts);
  }
  if (gamma >= 0.0) {
    s = knockoff::scale_smatrix(s, gamma);
  }
  knockoff::write_matrix(s.s.transpose(), out_path);
  return 0;
}

int run_sample(const std::string& x_path, const std::string& sigma_path,
               const std::string& s_path, const std::string& kind, std::uint64_t seed,
               const std::string& out_path) {
  const Eigen::MatrixXd x = knockoff::read_matrix(x_path);
  const Eigen::VectorXd s_diag = read_vector(s_path);
  knockoff::SMatrix s;
  s.s = s_diag;
  s.sigma_dim = static_cast<int>(x.cols());
  knockoff::RngStream rng(seed);

  knockoff::KnockoffDataset ds;
  if (kind == "fixedx") {
    ds = knockoff::construct_fixed_x(x, s, rng);
  } else if (kind == "mx" || kind == "second") {
    if (sigma_path.empty()) {
      throw knockoff::InvalidParams("--sigma is required for kinds mx and second");
    }
    const knockoff::CovModel sigma =
        knockoff::CovModel::regularized(knockoff::read_matrix(sigma_path));
    ds = kind == "mx" ? knockoff::sample_gaussian_mx(x, sigma, s, rng)
                      : knockoff::sample_second_order(x, sigma, s, rng);
  } else {
    throw knockoff::InvalidKind("--kind must be one of mx, second, fixedx");
  }
  knockoff::write_matrix(ds.x_knock, out_path);
  return 0;
}

int run_filter(const std::string& x_path, const std::string& xk_path, const std::string& y_path,
               const std::string& stat_name, double q, std::uint64_t seed,
               const std::string& out_path) {
  knockoff::KnockoffDataset ds;
  ds.x = knockoff::read_matrix(x_path);
  ds.x_knock = knockoff::read_matrix(xk_path);
  const Eigen::VectorXd y = read_vector(y_path);

  const knockoff::StatKind kind = knockoff::stat_kind_from_string(stat_name);
  knockoff::StatOptions opts;
  knockoff::RngStream rng(seed);
  const knockoff::StatVector w = knockoff::compute_statistic(ds, y, kind, opts, rng);
  const knockoff::SelectionResult sel = knockoff::knockoff_threshold(w, q);

  std::ofstream out(out_path);
  if (!out) throw knockoff::IoError("cannot open " + out_path + " for writing");
  out << "# T=" << knockoff::format_double(sel.threshold) << " selected=";
  for (std::size_t i = 0; i < sel.selected.size(); ++i) {
    if (i > 0) out << ',';
    out << sel.selected[i] + 1;
  }
  out << '\n';
  for (int j = 0; j < w.w.size(); ++j) {
    out << j + 1 << ',' << knockoff::format_double(w.w(j)) << '\n';
  }
  if (!out) throw knockoff::IoError("failed writing " + out_path);
  return 0;
}

int run_simulate(const std::string& config_path, const std::string& out_path, int threads,
                 bool has_threads, std::uint64_t seed, bool has_seed) {
  knockoff::ExperimentConfig cfg;
  try {
    std::ifstream in(config_path);
    if (!in) throw knockoff::IoError("cannot open " + config_path + " for reading");
    const std::string text((std::istreambuf_iterator<char>(in)),
                           std::istreambuf_iterator<char>());
    cfg = knockoff::parse_config(text);
    if (has_threads) cfg.threads = threads;
    if (has_seed) cfg.base_seed = seed;
    cfg.validate();
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  }

  const std::vector<knockoff::ExperimentRecord> records = knockoff::run_experiment(cfg);
  knockoff::emit_csv(records, cfg, out_path);

  int failed = 0;
  for (const auto& rec : records) {
    if (!rec.ok) {
      ++failed;
      std::cerr << "replication " << rec.replication << " failed: " << rec.error << '\n';
    }
  }
  if (failed > 0) {
    std::cerr << failed << " of " << records.size() << " replications failed\n";
    return 3;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Knockoff toolkit: S-matrix construction, knockoff sampling, selection filter, "
               "and Monte Carlo experiments"};
  app.require_subcommand(1);

  auto* sm = app.add_subcommand("smatrix", "Solve a diagonal S-matrix for a covariance matrix");
  std::string sm_sigma, sm_method, sm_out;
  int sm_block = 0;
  double sm_gamma = -1.0;
  sm->add_option("--sigma", sm_sigma, "Covariance matrix file")->required();
  sm->add_option("--method", sm_method, "One of mvr, maxent, sdp, equi")->required();
  sm->add_option("--block-size", sm_block,
                 "Blockwise approximation plus feasible-scaling line search (mvr/maxent only)");
  sm->add_option("--gamma", sm_gamma, "Scale the solved s by this factor in [0, 1]");
  sm->add_option("--out", sm_out, "Output file: s written as one comma-delimited row")->required();

  auto* sa = app.add_subcommand("sample", "Sample knockoff copies for a design matrix");
  std::string sa_x, sa_sigma, sa_s, sa_kind, sa_out;
  std::uint64_t sa_seed = 0;
  sa->add_option("--x", sa_x, "Design matrix file (n rows, p columns)")->required();
  sa->add_option("--sigma", sa_sigma, "Covariance matrix file (ignored for kind fixedx)");
  sa->add_option("--s", sa_s, "S-matrix diagonal file (one row or one column)")->required();
  sa->add_option("--kind", sa_kind, "One of mx, second, fixedx")->required();
  sa->add_option("--seed", sa_seed, "RNG seed")->required();
  sa->add_option("--out", sa_out, "Output file for the knockoff matrix")->required();

  auto* fi = app.add_subcommand("filter", "Compute feature statistics and the selection set");
  std::string fi_x, fi_xk, fi_y, fi_stat, fi_out;
  double fi_q = 0.1;
  std::uint64_t fi_seed = 0;
  fi->add_option("--x", fi_x, "Design matrix file")->required();
  fi->add_option("--xk", fi_xk, "Knockoff matrix file")->required();
  fi->add_option("--y", fi_y, "Response vector file")->required();
  fi->add_option("--stat", fi_stat, "One of lcd, ridge, ols, lsm")->required();
  fi->add_option("--q", fi_q, "Target FDR level in (0, 1)")->required();
  fi->add_option("--seed", fi_seed, "RNG seed (cross-validation folds)")->required();
  fi->add_option("--out", fi_out,
                 "Output file: '# T=... selected=...' header (1-based indices), then one "
                 "'index,W' line per feature")
      ->required();

  auto* si = app.add_subcommand(
      "simulate",
      "Run a replicated experiment from a flat key=value config file. Binomial responses are "
      "paired with the linear-model statistics (lcd/ridge/ols/lsm); no logistic fits are "
      "performed. Exit codes: 0 success, 2 config error, 3 at least one failed replication.");
  std::string si_config, si_out;
  int si_threads = 1;
  std::uint64_t si_seed = 0;
  si->add_option("--config", si_config, "Config file path")->required();
  si->add_option("--out", si_out, "Output CSV path")->required();
  auto* si_threads_opt = si->add_option("--threads", si_threads, "Worker threads");
  auto* si_seed_opt = si->add_option("--seed", si_seed, "Override base_seed from the config");

  CLI11_PARSE(app, argc, argv);

  try {
    if (sm->parsed()) return run_smatrix(sm_sigma, sm_method, sm_block, sm_gamma, sm_out);
    if (sa->parsed()) return run_sample(sa_x, sa_sigma, sa_s, sa_kind, sa_seed, sa_out);
    if (fi->parsed()) return run_filter(fi_x, fi_xk, fi_y, fi_stat, fi_q, fi_seed, fi_out);
    if (si->parsed()) {
      return run_simulate(si_config, si_out, si_threads, si_threads_opt->count() > 0, si_seed,
                          si_seed_opt->count() > 0);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
