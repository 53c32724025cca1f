#pragma once

#include <map>
#include <string>
#include <vector>

#include "gptcm/model.hpp"
#include "gptcm/samplers.hpp"

namespace gptcm {

class fit_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  long n_iterations = 10000;
  long n_warmup = 2000;
  long thin = 1;
  int n_chains = 1;
  std::uint64_t seed = 1;
  int threads = 1;
  bool prior_only = false;       // disable the likelihood (prior-recovery runs)
  bool record_pointwise = false; // per-subject log likelihood per recorded draw
  bool record_pi_rho = false;    // store the Bernoulli-beta probabilities
  bool debug_checks = false;     // cached vs full-recompute likelihood each iteration
  bool trace_blocks = false;     // record the block execution order
  long max_incidents = 100;

  long n_recorded() const { return (n_iterations - n_warmup) / thin; }
  std::vector<std::string> validation_errors() const;
  void validate() const;
};

struct ChainOutput {
  int chain_id = 0;
  std::vector<ParameterState> draws;  // thinned post-warmup snapshots
  std::vector<double> loglik;         // per recorded draw
  MatrixXd pointwise_loglik;          // n x n_recorded when requested
  std::vector<ParameterState> warmup_head;  // first <=100 warmup states
  std::map<std::string, SamplerDiagnostics> diagnostics;
  long clamp_count = 0;
  long incident_count = 0;
  double wall_seconds = 0.0;
  std::vector<std::string> trace;  // block order (trace_blocks runs)
};

struct FitResult {
  ModelSpec spec;
  RunConfig config;
  std::vector<ChainOutput> chains;
  std::map<std::string, double> rhat;  // split-Rhat per monitored scalar
  std::map<std::string, double> ess;   // effective sample size per monitored scalar
  bool converged = true;               // false when a chain failed
  std::string failure;

  long total_draws() const {
    long t = 0;
    for (const auto& c : chains) t += static_cast<long>(c.draws.size());
    return t;
  }
};

/// Holds one chain's state plus per-subject caches so that the univariate
/// full conditionals can be evaluated incrementally. All cache refreshes go
/// through the same formulas as the reference functions in model.hpp; a
/// debug mode cross-checks the cached likelihood against a full recompute.
class Fitter {
 public:
  Fitter(const SurvivalDataset& data, const ModelSpec& spec, const RunConfig& cfg);

  /// Overdispersed but finite-likelihood starting point.
  void init_state(Rng& rng);
  void set_state(const ParameterState& s);
  const ParameterState& state() const { return state_; }
  double loglik() const { return loglik_total_; }
  VectorXd pointwise_loglik() const { return loglik_i_; }
  long clamp_count() const { return clamp_count_; }
  long incident_count() const { return incident_count_; }
  std::map<std::string, SamplerDiagnostics>& diagnostics() { return diag_; }
  const std::vector<std::string>& trace() const { return trace_; }

  /// One full Algorithm-1 iteration for this variant.
  void sweep(Rng& rng);

  /// One Metropolis-Hastings single-flip move on block l (used by the
  /// sweep and exposed for the samplers-module wrapper).
  bool update_indicator(IndicatorKind kind, Eigen::Index l, Rng& rng);

  /// Full run for one chain.
  ChainOutput run(int chain_id, Rng rng);

  /// Cached total log likelihood recomputed from scratch (tests/debug).
  double loglik_full_recompute() const;

 private:
  friend struct FitterTestAccess;
  const SurvivalDataset& data_;
  ModelSpec spec_;
  RunConfig cfg_;
  ParameterState state_;

  // caches (length n or n x L)
  VectorXd log_time_;
  VectorXd log_theta_, theta_;
  MatrixXd log_mu_, wexp_, surv_;
  MatrixXd wterm_;  // -kappa log lambda - wexp (density mix term minus log p)
  MatrixXd log_alpha_, alpha_;
  VectorXd log_alpha0_, lg_alpha0_;
  MatrixXd aterm_;  // (alpha-1) log ptilde - lgamma(alpha), per subject/cell type
  MatrixXd log_p_, p_;
  VectorXd sum_ps_;
  VectorXd dens_rest_;  // event part of the log density minus log theta
  VectorXd dirich_;     // measurement-error log density per subject
  VectorXd loglik_i_;
  mutable VectorXd scratch_shift_;
  double loglik_total_ = 0.0;
  double lgam_kappa_ = 0.0;
  long clamp_count_ = 0;
  long incident_count_ = 0;
  std::map<std::string, SamplerDiagnostics> diag_;
  std::vector<std::string> trace_;
  bool tracing_ = false;

  // flat index offsets for the stacked indicator vector (j fastest, l slowest)
  std::vector<Eigen::Index> flat_offset_;

  bool likelihood_enabled() const { return !cfg_.prior_only; }
  void rebuild_caches();
  void recompute_subject_logliks();
  void refresh_cell_survival_nocommit(Eigen::Index l);
  void refresh_alpha_col(Eigen::Index l);
  void refresh_proportions();
  Eigen::Index flat_block(Eigen::Index flat) const;

  // trial evaluations: total log likelihood with one coordinate changed
  double loglik_with_xi0(double v) const;
  double loglik_with_xi(Eigen::Index k, double v) const;
  double loglik_with_theta_shift(double delta, Eigen::Index k) const;
  double loglik_with_kappa(double v) const;
  double loglik_with_beta(Eigen::Index j, Eigen::Index l, double v) const;
  double loglik_with_beta0(Eigen::Index l, double v) const;
  double loglik_with_cell_shift(Eigen::Index l, const double* shift_per_subject, double uniform_shift) const;
  double loglik_with_zeta(Eigen::Index j, Eigen::Index l, double v) const;
  double loglik_with_zeta0(Eigen::Index l, double v) const;
  double loglik_with_alpha_shift(Eigen::Index l, const double* shift_per_subject, double uniform_shift) const;
  double survival_loglik_row(Eigen::Index i, double theta, double log_theta, double sum_ps,
                             const double* dterm_row, double kappa) const;

  // commits (update state + caches + per-subject logliks)
  void commit_xi0(double v);
  void commit_xi(Eigen::Index k, double v);
  void commit_kappa(double v);
  void commit_beta(Eigen::Index j, Eigen::Index l, double v);
  void commit_beta0(Eigen::Index l, double v);
  void commit_zeta(Eigen::Index j, Eigen::Index l, double v);
  void commit_zeta0(Eigen::Index l, double v);

  void refresh_cell_survival(Eigen::Index l);   // after beta/beta0 change in block l
  void refresh_alpha_block(Eigen::Index l);     // after zeta/zeta0 change in block l
  void refresh_all_weibull();                   // after kappa change
  void refresh_theta();

  void slice_update_scalar(const std::string& block, const LogDensity& ld, double current, Rng& rng,
                           const std::function<void(double)>& commit);
  void arms_update_coord(const std::string& block, const LogDensity& ld, double current, double prior_sd,
                         Rng& rng, const std::function<void(double)>& commit);

  void gibbs_variances_cure(Rng& rng);
  void gibbs_variances_beta(Eigen::Index l, Rng& rng);
  void gibbs_variances_zeta(Eigen::Index l, Rng& rng);
  void gibbs_pi(Rng& rng);
  void gibbs_rho(Rng& rng);

  void stage_guard(const char* stage, const ParameterState& before);
  void note(const std::string& label);
  double indicator_prior_delta(IndicatorKind kind, Eigen::Index l, Eigen::Index j, int to) const;
};

/// Runs n_chains chains on distinct substreams (chain c uses stream c+1),
/// possibly concurrently, then merges and attaches split-Rhat/ESS for the
/// monitored scalars. Results are independent of the thread count.
FitResult run_fit(const SurvivalDataset& data, const ModelSpec& spec, const RunConfig& cfg);

/// Single chain (chain_id selects the RNG substream).
ChainOutput run_chain(const SurvivalDataset& data, const ModelSpec& spec, const RunConfig& cfg,
                      int chain_id);

// --- convergence diagnostics -------------------------------------------------

/// Split-Rhat over a set of equal-length scalar chains (BDA3 form).
double split_rhat(const std::vector<std::vector<double>>& chains);
/// Effective sample size via Geyer's initial positive sequence.
double effective_sample_size(const std::vector<std::vector<double>>& chains);

/// Names of the scalars monitored for Rhat/ESS.
std::vector<std::string> monitored_scalar_names(const SurvivalDataset& data, const ModelSpec& spec);
/// Extracts a monitored scalar's chain from recorded draws.
std::vector<double> extract_scalar(const ChainOutput& chain, const std::string& name);

}  // namespace gptcm
