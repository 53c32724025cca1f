#include "gptcm/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace gptcm {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double require_positive(double v, const char* name) {
  if (!(v > 0.0) || !std::isfinite(v))
    throw domain_error(std::string(name) + " must be strictly positive and finite");
  return v;
}
}  // namespace

double weibull_survival(double t, double lambda, double kappa) {
  require_positive(t, "t");
  require_positive(lambda, "lambda");
  require_positive(kappa, "kappa");
  return std::exp(-std::pow(t / lambda, kappa));
}

double weibull_scale_from_mean(double mu, double kappa) {
  require_positive(mu, "mu");
  require_positive(kappa, "kappa");
  return mu / std::exp(std::lgamma(1.0 + 1.0 / kappa));
}

double population_survival(double t, double theta, const VectorXd& props, const VectorXd& surv) {
  require_positive(t, "t");
  require_positive(theta, "theta");
  if (props.size() != surv.size()) throw domain_error("props/surv length mismatch");
  if (std::abs(props.sum() - 1.0) > 1e-8)
    throw domain_error("proportions must sum to 1 (got " + std::to_string(props.sum()) + ")");
  double mix = 0.0;
  for (Eigen::Index l = 0; l < props.size(); ++l) {
    if (!(props(l) > 0.0)) throw domain_error("proportions must be strictly positive");
    // surv = 0 is the valid underflow limit (the cure plateau)
    if (!(surv(l) >= 0.0 && surv(l) <= 1.0)) throw domain_error("survival values must lie in [0,1]");
    mix += props(l) * surv(l);
  }
  return std::exp(-theta * (1.0 - mix));
}

double population_log_density(double t, double theta, const VectorXd& props, const VectorXd& lambdas,
                              double kappa) {
  require_positive(t, "t");
  require_positive(theta, "theta");
  require_positive(kappa, "kappa");
  if (props.size() != lambdas.size()) throw domain_error("props/lambdas length mismatch");
  if (std::abs(props.sum() - 1.0) > 1e-8) throw domain_error("proportions must sum to 1");

  // log sum_l p_l lambda_l^-kappa e^{-(t/lambda_l)^kappa} via log-sum-exp,
  // and sum_l p_l S_l(t) in linear space (L is small).
  VectorXd terms(props.size());
  double max_term = kNegInf;
  double mix = 0.0;
  for (Eigen::Index l = 0; l < props.size(); ++l) {
    require_positive(lambdas(l), "lambda");
    if (!(props(l) > 0.0)) throw domain_error("proportions must be strictly positive");
    const double log_lambda = std::log(lambdas(l));
    const double wexp = std::exp(std::min(kExpClamp, kappa * (std::log(t) - log_lambda)));
    terms(l) = std::log(props(l)) - kappa * log_lambda - wexp;
    max_term = std::max(max_term, terms(l));
    mix += props(l) * std::exp(-wexp);
  }
  double lse = kNegInf;
  if (max_term > kNegInf) {
    double acc = 0.0;
    for (Eigen::Index l = 0; l < terms.size(); ++l) acc += std::exp(terms(l) - max_term);
    lse = max_term + std::log(acc);
  }
  const double log_spop = -theta * (1.0 - mix);
  return log_spop + std::log(theta) + std::log(kappa) + (kappa - 1.0) * std::log(t) + lse;
}

double dirichlet_log_density(const VectorXd& ptilde, const VectorXd& alpha) {
  if (ptilde.size() != alpha.size()) throw domain_error("ptilde/alpha length mismatch");
  if (std::abs(ptilde.sum() - 1.0) > 1e-8) throw domain_error("composition must sum to 1");
  double lp = 0.0, alpha0 = 0.0;
  for (Eigen::Index l = 0; l < alpha.size(); ++l) {
    require_positive(alpha(l), "alpha");
    if (!(ptilde(l) > 0.0 && ptilde(l) < 1.0))
      throw domain_error("composition must be strictly interior to the simplex");
    lp += (alpha(l) - 1.0) * std::log(ptilde(l)) - std::lgamma(alpha(l));
    alpha0 += alpha(l);
  }
  return lp + std::lgamma(alpha0);
}

DerivedQuantities linear_predictors(const ParameterState& state, const SurvivalDataset& data,
                                    const ModelSpec& spec) {
  const Eigen::Index n = data.n(), L = data.L();
  DerivedQuantities dq;
  long clamps = 0;
  dq.kappa = state.kappa;

  dq.log_theta = VectorXd::Constant(n, state.xi0);
  if (data.d() > 0) dq.log_theta += data.clinical * state.xi;
  dq.theta.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (dq.log_theta(i) > kExpClamp || dq.log_theta(i) < -kExpClamp) {
      ++clamps;
      dq.log_theta(i) = std::clamp(dq.log_theta(i), -kExpClamp, kExpClamp);
    }
    dq.theta(i) = std::exp(dq.log_theta(i));
  }

  dq.log_mu.resize(n, L);
  dq.log_lambda.resize(n, L);
  dq.wexp.resize(n, L);
  dq.surv.resize(n, L);
  const double lgam = std::lgamma(1.0 + 1.0 / state.kappa);
  for (Eigen::Index l = 0; l < L; ++l) {
    const auto sl = static_cast<size_t>(l);
    dq.log_mu.col(l) = VectorXd::Constant(n, state.beta0(l));
    if (data.p(l) > 0) dq.log_mu.col(l) += data.cell_covariates[sl] * state.beta[sl];
    dq.log_lambda.col(l) = dq.log_mu.col(l).array() - lgam;
    for (Eigen::Index i = 0; i < n; ++i) {
      double arg = state.kappa * (std::log(data.time(i)) - dq.log_lambda(i, l));
      if (arg > kExpClamp) {
        ++clamps;
        arg = kExpClamp;
      }
      dq.wexp(i, l) = std::exp(arg);  // underflow to 0 is benign (S_l -> 1)
      dq.surv(i, l) = std::exp(-dq.wexp(i, l));
    }
  }

  dq.log_p.resize(n, L);
  dq.p.resize(n, L);
  if (has_measurement_error(spec.variant)) {
    dq.log_alpha.resize(n, L);
    dq.alpha.resize(n, L);
    dq.log_alpha0.resize(n);
    for (Eigen::Index l = 0; l < L; ++l) {
      const auto sl = static_cast<size_t>(l);
      dq.log_alpha.col(l) = VectorXd::Constant(n, state.zeta0(l));
      if (data.p(l) > 0) dq.log_alpha.col(l) += data.cell_covariates[sl] * state.zeta[sl];
      for (Eigen::Index i = 0; i < n; ++i) {
        if (dq.log_alpha(i, l) > kExpClamp || dq.log_alpha(i, l) < -kExpClamp) {
          ++clamps;
          dq.log_alpha(i, l) = std::clamp(dq.log_alpha(i, l), -kExpClamp, kExpClamp);
        }
        dq.alpha(i, l) = std::exp(dq.log_alpha(i, l));
      }
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      const double m = dq.log_alpha.row(i).maxCoeff();
      double acc = 0.0;
      for (Eigen::Index l = 0; l < L; ++l) acc += std::exp(dq.log_alpha(i, l) - m);
      dq.log_alpha0(i) = m + std::log(acc);
      for (Eigen::Index l = 0; l < L; ++l) {
        dq.log_p(i, l) = dq.log_alpha(i, l) - dq.log_alpha0(i);
        dq.p(i, l) = std::exp(dq.log_p(i, l));
      }
    }
  } else {
    dq.p = data.proportions;
    dq.log_p = data.proportions.array().log();
  }

  dq.sum_ps.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double acc = 0.0;
    for (Eigen::Index l = 0; l < L; ++l) acc += dq.p(i, l) * dq.surv(i, l);
    dq.sum_ps(i) = std::max(acc, 1e-300);
  }
  dq.clamp_count = clamps;
  return dq;
}

double log_likelihood(const DerivedQuantities& dq, const SurvivalDataset& data, const ModelSpec& spec) {
  const Eigen::Index n = data.n(), L = data.L();
  const bool meas = has_measurement_error(spec.variant);
  const double kappa = dq.kappa;
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    double ll = -dq.theta(i) * (1.0 - dq.sum_ps(i));  // log S_pop
    if (data.event(i) == 1) {
      double m = kNegInf;
      double terms[8];
      double* tp = L <= 8 ? terms : nullptr;
      VectorXd big;
      if (!tp) {
        big.resize(L);
        tp = big.data();
      }
      for (Eigen::Index l = 0; l < L; ++l) {
        tp[l] = dq.log_p(i, l) - kappa * dq.log_lambda(i, l) - dq.wexp(i, l);
        m = std::max(m, tp[l]);
      }
      if (m == kNegInf) {
        ll = kNegInf;  // density underflow: permitted, never NaN
      } else {
        double acc = 0.0;
        for (Eigen::Index l = 0; l < L; ++l) acc += std::exp(tp[l] - m);
        ll += dq.log_theta(i) + std::log(kappa) + (kappa - 1.0) * std::log(data.time(i)) + m + std::log(acc);
      }
    }
    if (meas) {
      for (Eigen::Index l = 0; l < L; ++l)
        ll += (dq.alpha(i, l) - 1.0) * std::log(data.proportions(i, l)) - std::lgamma(dq.alpha(i, l));
      ll += std::lgamma(std::exp(dq.log_alpha0(i)));
    }
    if (std::isnan(ll)) ll = kNegInf;
    total += ll;
    if (total == kNegInf) return kNegInf;
  }
  return total;
}

double log_likelihood(const ParameterState& state, const SurvivalDataset& data, const ModelSpec& spec) {
  return log_likelihood(linear_predictors(state, data, spec), data, spec);
}

double mrf_log_prior(const VectorXi& gamma, const MrfGraph& graph) {
  if (gamma.size() != graph.dim)
    throw domain_error("indicator vector length " + std::to_string(gamma.size()) +
                       " != graph dimension " + std::to_string(graph.dim));
  double quad = 0.0;
  for (size_t k = 0; k < graph.weight.size(); ++k)
    if (gamma(graph.edge_i[k]) == 1 && gamma(graph.edge_j[k]) == 1) quad += 2.0 * graph.weight[k];
  return graph.a * static_cast<double>(gamma.sum()) + graph.b * quad;
}

// --- full conditionals -----------------------------------------------------

namespace {

double normal_log_kernel(double x, double variance) { return -0.5 * x * x / variance; }

}  // namespace

double logcond_beta(Eigen::Index j, Eigen::Index l, double value, const ParameterState& state,
                    const SurvivalDataset& data, const ModelSpec& spec) {
  const auto sl = static_cast<size_t>(l);
  if (has_selection(spec.variant) && state.gamma[sl](j) != 1)
    throw contract_error("logcond_beta requires gamma[j,l] = 1");
  ParameterState s = state;
  s.beta[sl](j) = value;
  return log_likelihood(s, data, spec) + normal_log_kernel(value, state.tau2(l));
}

double logcond_beta0(Eigen::Index l, double value, const ParameterState& state,
                     const SurvivalDataset& data, const ModelSpec& spec) {
  ParameterState s = state;
  s.beta0(l) = value;
  return log_likelihood(s, data, spec) + normal_log_kernel(value, state.tau02);
}

double logcond_xi(Eigen::Index k, double value, const ParameterState& state,
                  const SurvivalDataset& data, const ModelSpec& spec) {
  ParameterState s = state;
  s.xi(k) = value;
  return log_likelihood(s, data, spec) + normal_log_kernel(value, state.v2);
}

double logcond_xi0(double value, const ParameterState& state, const SurvivalDataset& data,
                   const ModelSpec& spec) {
  ParameterState s = state;
  s.xi0 = value;
  return log_likelihood(s, data, spec) + normal_log_kernel(value, state.v02);
}

double logcond_zeta(Eigen::Index j, Eigen::Index l, double value, const ParameterState& state,
                    const SurvivalDataset& data, const ModelSpec& spec) {
  if (!has_measurement_error(spec.variant))
    throw contract_error("zeta conditionals do not exist without the measurement-error submodel");
  const auto sl = static_cast<size_t>(l);
  if (has_selection(spec.variant) && state.eta[sl](j) != 1)
    throw contract_error("logcond_zeta requires eta[j,l] = 1");
  ParameterState s = state;
  s.zeta[sl](j) = value;
  return log_likelihood(s, data, spec) + normal_log_kernel(value, state.w2(l));
}

double logcond_zeta0(Eigen::Index l, double value, const ParameterState& state,
                     const SurvivalDataset& data, const ModelSpec& spec) {
  if (!has_measurement_error(spec.variant))
    throw contract_error("zeta conditionals do not exist without the measurement-error submodel");
  ParameterState s = state;
  s.zeta0(l) = value;
  return log_likelihood(s, data, spec) + normal_log_kernel(value, state.w02);
}

double logcond_kappa(double value, const ParameterState& state, const SurvivalDataset& data,
                     const ModelSpec& spec) {
  if (!(value > 0.0)) return kNegInf;
  ParameterState s = state;
  s.kappa = value;
  const auto& h = spec.hyper;
  return log_likelihood(s, data, spec) + (h.a_kappa - 1.0) * std::log(value) - h.b_kappa * value;
}

ConjugatePosteriors conjugate_posteriors(const ParameterState& state, const SurvivalDataset& data,
                                         const HyperParams& hyper) {
  ConjugatePosteriors out;
  const Eigen::Index L = data.L(), d = data.d();

  out.v2 = {hyper.a_v + 0.5 * static_cast<double>(d), hyper.b_v + 0.5 * state.xi.squaredNorm()};
  out.v02 = {hyper.a_v0 + 0.5, hyper.b_v0 + 0.5 * state.xi0 * state.xi0};
  out.tau02 = {hyper.a_tau0 + 0.5 * static_cast<double>(L), hyper.b_tau0 + 0.5 * state.beta0.squaredNorm()};
  out.w02 = {hyper.a_w0 + 0.5 * static_cast<double>(L), hyper.b_w0 + 0.5 * state.zeta0.squaredNorm()};

  out.tau2.resize(static_cast<size_t>(L));
  out.w2.resize(static_cast<size_t>(L));
  out.pi.resize(static_cast<size_t>(L));
  out.rho.resize(static_cast<size_t>(L));
  for (Eigen::Index l = 0; l < L; ++l) {
    const auto sl = static_cast<size_t>(l);
    const Eigen::Index pl = data.p(l);
    const double n_active_beta = static_cast<double>(state.gamma[sl].sum());
    const double n_active_zeta = static_cast<double>(state.eta[sl].sum());
    out.tau2[sl] = {hyper.a_tau + 0.5 * n_active_beta, hyper.b_tau + 0.5 * state.beta[sl].squaredNorm()};
    out.w2[sl] = {hyper.a_w + 0.5 * n_active_zeta, hyper.b_w + 0.5 * state.zeta[sl].squaredNorm()};
    out.pi[sl].resize(static_cast<size_t>(pl));
    out.rho[sl].resize(static_cast<size_t>(pl));
    const double b_pi = hyper.beta_b_pi(pl);
    const double b_rho = hyper.beta_b_rho(pl);
    const double pd = static_cast<double>(pl);
    for (Eigen::Index j = 0; j < pl; ++j) {
      const double g = static_cast<double>(state.gamma[sl](j));
      const double e = static_cast<double>(state.eta[sl](j));
      out.pi[sl][static_cast<size_t>(j)] = {hyper.a_pi + g, b_pi + pd - g};
      out.rho[sl][static_cast<size_t>(j)] = {hyper.a_rho + e, b_rho + pd - e};
    }
  }
  return out;
}

}  // namespace gptcm
