#pragma once

#include "gptcm/rng.hpp"
#include "gptcm/types.hpp"

namespace gptcm {

/// Synthetic-data generator configuration. Defaults follow the
/// low-dimensional design; presets adjust p and the mode.
struct SimConfig {
  enum class Mode { gptcm, cox_misspec };
  Mode mode = Mode::gptcm;
  Eigen::Index n = 200;
  Eigen::Index p = 10;
  Eigen::Index L = 3;
  double kappa_true = 2.0;
  double rho_cross = 0.1;                          // cross-cell-type correlation
  std::vector<double> rho_within = {0.13, 0.14, 0.15};  // AR base per cell type (first 6 vars)

  // generating coefficients; empty = standard tables (requires L = 3)
  double xi0_true = 1.0;
  VectorXd xi_true;                 // default (0.6, -1)
  std::vector<VectorXd> beta_true;  // per cell type, length p
  std::vector<VectorXd> zeta_true;
  VectorXd zeta0_true;              // default (-0.5, 1, 1.2)

  // censoring: C = min(Uniform(lo,hi), Exponential(rate))
  double censor_unif_lo = 1.0;
  double censor_unif_hi = 4.0;
  double censor_exp_rate = 0.044628710262841953;  // -log(0.8)/5

  // Cox-Weibull misspecification design
  VectorXd cox_effects;        // default (-0.8, -2, -2, 1, 1)
  double cox_baseline = 0.5;   // h0, chosen so the median survival is near 1
  double cox_target_censoring = 0.2;
  Eigen::Index cox_pseudo_L = 3;

  std::uint64_t seed = 1;

  static SimConfig low_dim(std::uint64_t seed);
  static SimConfig high_dim(std::uint64_t seed);
  static SimConfig cox_misspec_design(std::uint64_t seed);

  void fill_default_coefficients();
  std::vector<std::string> validation_errors() const;
  void validate() const;
};

/// Everything needed to score a fit against the generator.
struct SimulationTruth {
  double xi0 = 0.0;
  VectorXd xi;
  double kappa = 1.0;
  std::vector<VectorXd> beta;  // per cell type
  std::vector<VectorXd> zeta;
  VectorXd zeta0;
  VectorXi gamma_true;  // flattened nonzero mask (j fastest, l slowest)
  VectorXi eta_true;
  VectorXi cured;          // per subject
  VectorXd latent_time;    // +inf for cured subjects
  MatrixXd underlying_p;   // the drawn compositions entering S_pop
  double cox_censor_rate = 0.0;  // calibrated exponential rate (misspec mode)

  VectorXd flatten_beta() const;
  VectorXd flatten_zeta() const;
};

/// The block covariance of the stacked cell-type covariates: unit diagonal,
/// rho I_p off-diagonal blocks, AR entries rho_l^|j-j'| among the first six
/// variables of each cell type. Throws if not positive definite.
MatrixXd build_covariance(Eigen::Index p, Eigen::Index L, double rho_cross,
                          const std::vector<double>& rho_within);

/// One draw from the noncured event-time law f_pop(t)/(1-e^-theta), by
/// bisection on the monotone conditional survival (the reference generator).
double sample_noncured_time(double theta, const VectorXd& props, const VectorXd& lambdas, double kappa,
                            Rng& rng);

/// Same law via a random-walk Metropolis-Hastings sampler (cross-validation
/// path; `steps` moves from an interior start).
double sample_noncured_time_mh(double theta, const VectorXd& props, const VectorXd& lambdas,
                               double kappa, Rng& rng, int steps = 60);

std::pair<SurvivalDataset, SimulationTruth> simulate_gptcm(const SimConfig& cfg);
std::pair<SurvivalDataset, SimulationTruth> simulate_cox_misspec(const SimConfig& cfg);
std::pair<SurvivalDataset, SimulationTruth> simulate(const SimConfig& cfg);

/// MRF graph from the precision matrix of the covariate covariance: weight 1
/// for within-cell-type pairs whose precision entry exceeds 1e-8 in
/// magnitude, weight 0.5 between copies of the same variable across cell
/// types, 0 elsewhere.
MrfGraph build_mrf_graph_from_precision(const MatrixXd& sigma, Eigen::Index p, Eigen::Index L,
                                        double a, double b);

/// Misspecification-design graph: weight-1 edges between the same variable
/// across the pseudo cell types, nothing else.
MrfGraph build_same_variable_graph(Eigen::Index p, Eigen::Index L, double a, double b);

}  // namespace gptcm
