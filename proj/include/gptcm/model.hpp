#pragma once

#include "gptcm/types.hpp"

namespace gptcm {

// ---------------------------------------------------------------------------
// Elementary model functions
// ---------------------------------------------------------------------------

/// Weibull survival S(t) = exp(-(t/lambda)^kappa). All arguments must be
/// strictly positive.
double weibull_survival(double t, double lambda, double kappa);

/// Scale lambda such that a Weibull(lambda, kappa) has mean mu:
/// lambda = mu / Gamma(1 + 1/kappa).
double weibull_scale_from_mean(double mu, double kappa);

/// Population survival of the cure-mixture: exp(-theta (1 - sum_l p_l S_l(t))).
/// props must sum to 1 within 1e-8 and surv entries lie in (0,1].
double population_survival(double t, double theta, const VectorXd& props, const VectorXd& surv);

/// Log of f_pop(t) = -dS_pop/dt
///   = S_pop(t) * theta * kappa * t^(kappa-1) * sum_l p_l lambda_l^(-kappa) e^{-(t/lambda_l)^kappa}.
double population_log_density(double t, double theta, const VectorXd& props, const VectorXd& lambdas,
                              double kappa);

/// Dirichlet log density of a strictly interior composition.
double dirichlet_log_density(const VectorXd& ptilde, const VectorXd& alpha);

/// All per-subject derived quantities for a state. For variants without the
/// measurement-error regression the observed proportions are used verbatim.
DerivedQuantities linear_predictors(const ParameterState& state, const SurvivalDataset& data,
                                    const ModelSpec& spec);

/// Eq.-(6) log likelihood: survival part always, Dirichlet part for the
/// measurement-error variants. Returns -inf only on survival underflow,
/// never NaN.
double log_likelihood(const ParameterState& state, const SurvivalDataset& data, const ModelSpec& spec);

/// Same, reusing precomputed derived quantities.
double log_likelihood(const DerivedQuantities& dq, const SurvivalDataset& data, const ModelSpec& spec);

/// Unnormalized MRF log prior a * 1'gamma + b * gamma' G gamma where G is
/// symmetric with zero diagonal (each edge contributes twice to the
/// quadratic form).
double mrf_log_prior(const VectorXi& gamma, const MrfGraph& graph);

// ---------------------------------------------------------------------------
// Full conditionals (log densities up to additive constants)
// ---------------------------------------------------------------------------
// Each is a function of one scalar coordinate with everything else held at
// the values in `state`. They are reference implementations: full
// log-likelihood at the modified state plus the coordinate's log prior.

double logcond_beta(Eigen::Index j, Eigen::Index l, double value, const ParameterState& state,
                    const SurvivalDataset& data, const ModelSpec& spec);
double logcond_beta0(Eigen::Index l, double value, const ParameterState& state,
                     const SurvivalDataset& data, const ModelSpec& spec);
double logcond_xi(Eigen::Index k, double value, const ParameterState& state,
                  const SurvivalDataset& data, const ModelSpec& spec);
double logcond_xi0(double value, const ParameterState& state, const SurvivalDataset& data,
                   const ModelSpec& spec);
double logcond_zeta(Eigen::Index j, Eigen::Index l, double value, const ParameterState& state,
                    const SurvivalDataset& data, const ModelSpec& spec);
double logcond_zeta0(Eigen::Index l, double value, const ParameterState& state,
                     const SurvivalDataset& data, const ModelSpec& spec);
double logcond_kappa(double value, const ParameterState& state, const SurvivalDataset& data,
                     const ModelSpec& spec);

// ---------------------------------------------------------------------------
// Conjugate updates
// ---------------------------------------------------------------------------

struct InvGammaParams {
  double shape = 0.0;
  double rate = 0.0;  // IGamma(shape, rate): mean = rate / (shape - 1)
};
struct BetaParams {
  double a = 0.0;
  double b = 0.0;
};

/// The exact posterior parameter pairs of every conjugate block.
struct ConjugatePosteriors {
  InvGammaParams v2, v02, tau02, w02;
  std::vector<InvGammaParams> tau2, w2;          // per cell type
  std::vector<std::vector<BetaParams>> pi, rho;  // per cell type, per coefficient
};

ConjugatePosteriors conjugate_posteriors(const ParameterState& state, const SurvivalDataset& data,
                                         const HyperParams& hyper);

}  // namespace gptcm
