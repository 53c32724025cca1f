#include "gptcm/mcmc.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <mutex>
#include <sstream>
#include <thread>

namespace gptcm {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr int kSliceMaxSteps = 50;
constexpr double kSliceWidth = 1.0;

double normal_kernel(double x, double variance) { return -0.5 * x * x / variance; }
}  // namespace

std::vector<std::string> RunConfig::validation_errors() const {
  std::vector<std::string> errs;
  if (n_iterations <= 0) errs.push_back("n_iterations must be positive");
  if (n_warmup < 0 || n_warmup >= n_iterations) errs.push_back("n_warmup must satisfy 0 <= n_warmup < n_iterations");
  if (thin < 1) errs.push_back("thin must be >= 1");
  if (n_chains < 1) errs.push_back("n_chains must be >= 1");
  if (threads < 1) errs.push_back("threads must be >= 1");
  return errs;
}

void RunConfig::validate() const {
  auto errs = validation_errors();
  if (errs.empty()) return;
  std::ostringstream os;
  os << "invalid run config:";
  for (const auto& e : errs) os << "\n  - " << e;
  throw domain_error(os.str());
}

// ---------------------------------------------------------------------------
// Fitter
// ---------------------------------------------------------------------------

Fitter::Fitter(const SurvivalDataset& data, const ModelSpec& spec, const RunConfig& cfg)
    : data_(data), spec_(spec), cfg_(cfg) {
  data_.validate();
  spec_.validate(data_);
  cfg_.validate();
  if (spec_.graph_beta) spec_.graph_beta->finalize();
  if (spec_.graph_zeta) spec_.graph_zeta->finalize();

  std::vector<Eigen::Index> ps;
  for (Eigen::Index l = 0; l < data_.L(); ++l) ps.push_back(data_.p(l));
  state_ = ParameterState::zeros(data_.d(), ps);
  flat_offset_.assign(ps.size() + 1, 0);
  for (size_t l = 0; l < ps.size(); ++l) flat_offset_[l + 1] = flat_offset_[l] + ps[l];
  rebuild_caches();
}

void Fitter::init_state(Rng& rng) {
  const double events = static_cast<double>(data_.event.sum());
  const double tsum = data_.time.sum();
  state_.xi0 = std::log(std::max(events, 0.5) / tsum);
  state_.xi.setZero();
  state_.kappa = 1.0;
  state_.beta0.setZero();
  state_.zeta0.setZero();
  const auto& h = spec_.hyper;
  auto ig_mean = [](double a, double b) { return a > 1.0 ? b / (a - 1.0) : b; };
  state_.v2 = ig_mean(h.a_v, h.b_v);
  state_.v02 = ig_mean(h.a_v0, h.b_v0);
  state_.tau02 = ig_mean(h.a_tau0, h.b_tau0);
  state_.w02 = ig_mean(h.a_w0, h.b_w0);
  state_.tau2.setConstant(ig_mean(h.a_tau, h.b_tau));
  state_.w2.setConstant(ig_mean(h.a_w, h.b_w));
  const bool sel = has_selection(spec_.variant);
  for (Eigen::Index l = 0; l < data_.L(); ++l) {
    const auto sl = static_cast<size_t>(l);
    state_.beta[sl].setZero();
    state_.zeta[sl].setZero();
    const double bpi = h.beta_b_pi(data_.p(l));
    const double brho = h.beta_b_rho(data_.p(l));
    for (Eigen::Index j = 0; j < data_.p(l); ++j) {
      state_.gamma[sl](j) = sel ? (rng.bernoulli(0.5) ? 1 : 0) : 1;
      state_.eta[sl](j) = sel ? (rng.bernoulli(0.5) ? 1 : 0) : 1;
      state_.pi[sl](j) = h.a_pi / (h.a_pi + bpi);
      state_.rho[sl](j) = h.a_rho / (h.a_rho + brho);
    }
  }
  rebuild_caches();
}

void Fitter::set_state(const ParameterState& s) {
  s.validate(data_);
  state_ = s;
  rebuild_caches();
}

void Fitter::rebuild_caches() {
  const Eigen::Index n = data_.n(), L = data_.L();
  log_time_ = data_.time.array().log();
  lgam_kappa_ = std::lgamma(1.0 + 1.0 / state_.kappa);

  log_theta_ = VectorXd::Constant(n, state_.xi0);
  if (data_.d() > 0) log_theta_ += data_.clinical * state_.xi;
  theta_.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (log_theta_(i) > kExpClamp || log_theta_(i) < -kExpClamp) {
      ++clamp_count_;
      log_theta_(i) = std::clamp(log_theta_(i), -kExpClamp, kExpClamp);
    }
    theta_(i) = std::exp(log_theta_(i));
  }

  log_mu_.resize(n, L);
  wexp_.resize(n, L);
  surv_.resize(n, L);
  wterm_.resize(n, L);
  for (Eigen::Index l = 0; l < L; ++l) refresh_cell_survival_nocommit(l);

  log_p_.resize(n, L);
  p_.resize(n, L);
  if (has_measurement_error(spec_.variant)) {
    log_alpha_.resize(n, L);
    alpha_.resize(n, L);
    log_alpha0_.resize(n);
    lg_alpha0_.resize(n);
    aterm_.resize(n, L);
    dirich_.resize(n);
    for (Eigen::Index l = 0; l < L; ++l) refresh_alpha_col(l);
    refresh_proportions();
  } else {
    p_ = data_.proportions;
    log_p_ = data_.proportions.array().log();
    dirich_ = VectorXd::Zero(n);
  }
  recompute_subject_logliks();
}

// recompute column l of log_mu/wexp/surv/wterm from the state
void Fitter::refresh_cell_survival_nocommit(Eigen::Index l) {
  const Eigen::Index n = data_.n();
  const auto sl = static_cast<size_t>(l);
  log_mu_.col(l) = VectorXd::Constant(n, state_.beta0(l));
  if (data_.p(l) > 0) log_mu_.col(l) += data_.cell_covariates[sl] * state_.beta[sl];
  const double kappa = state_.kappa;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double loglam = log_mu_(i, l) - lgam_kappa_;
    double arg = kappa * (log_time_(i) - loglam);
    if (arg > kExpClamp) {
      ++clamp_count_;
      arg = kExpClamp;
    }
    wexp_(i, l) = std::exp(arg);
    surv_(i, l) = std::exp(-wexp_(i, l));
    wterm_(i, l) = -kappa * loglam - wexp_(i, l);
  }
}

void Fitter::refresh_alpha_col(Eigen::Index l) {
  const Eigen::Index n = data_.n();
  const auto sl = static_cast<size_t>(l);
  log_alpha_.col(l) = VectorXd::Constant(n, state_.zeta0(l));
  if (data_.p(l) > 0) log_alpha_.col(l) += data_.cell_covariates[sl] * state_.zeta[sl];
  for (Eigen::Index i = 0; i < n; ++i) {
    if (log_alpha_(i, l) > kExpClamp || log_alpha_(i, l) < -kExpClamp) {
      ++clamp_count_;
      log_alpha_(i, l) = std::clamp(log_alpha_(i, l), -kExpClamp, kExpClamp);
    }
    alpha_(i, l) = std::exp(log_alpha_(i, l));
    aterm_(i, l) = (alpha_(i, l) - 1.0) * std::log(data_.proportions(i, l)) - std::lgamma(alpha_(i, l));
  }
}

// normalization, proportions and the Dirichlet per-subject log density
void Fitter::refresh_proportions() {
  const Eigen::Index n = data_.n(), L = data_.L();
  for (Eigen::Index i = 0; i < n; ++i) {
    double m = kNegInf;
    for (Eigen::Index l = 0; l < L; ++l) m = std::max(m, log_alpha_(i, l));
    double acc = 0.0;
    for (Eigen::Index l = 0; l < L; ++l) acc += std::exp(log_alpha_(i, l) - m);
    log_alpha0_(i) = m + std::log(acc);
    lg_alpha0_(i) = std::lgamma(std::exp(log_alpha0_(i)));
    double dir = lg_alpha0_(i);
    for (Eigen::Index l = 0; l < L; ++l) {
      log_p_(i, l) = log_alpha_(i, l) - log_alpha0_(i);
      p_(i, l) = std::exp(log_p_(i, l));
      dir += aterm_(i, l);
    }
    dirich_(i) = dir;
  }
}

double Fitter::survival_loglik_row(Eigen::Index i, double theta, double log_theta, double sum_ps,
                                   const double* dterm_row, double kappa) const {
  double ll = -theta * (1.0 - sum_ps);
  if (data_.event(i) == 1) {
    double m = kNegInf;
    const Eigen::Index L = data_.L();
    for (Eigen::Index l = 0; l < L; ++l) m = std::max(m, dterm_row[l]);
    if (m == kNegInf) return kNegInf;
    double acc = 0.0;
    for (Eigen::Index l = 0; l < L; ++l) acc += std::exp(dterm_row[l] - m);
    ll += log_theta + std::log(kappa) + (kappa - 1.0) * log_time_(i) + m + std::log(acc);
  }
  return ll;
}

void Fitter::recompute_subject_logliks() {
  const Eigen::Index n = data_.n(), L = data_.L();
  if (L > 32) throw domain_error("more than 32 cell types is not supported");
  loglik_i_.resize(n);
  sum_ps_.resize(n);
  dens_rest_.resize(n);
  const double kappa = state_.kappa;
  const bool meas = has_measurement_error(spec_.variant);
  double total = 0.0;
  double drow[32];
  for (Eigen::Index i = 0; i < n; ++i) {
    double sp = 0.0;
    for (Eigen::Index l = 0; l < L; ++l) {
      sp += p_(i, l) * surv_(i, l);
      drow[l] = log_p_(i, l) + wterm_(i, l);
    }
    sum_ps_(i) = std::max(sp, 1e-300);
    double ll = survival_loglik_row(i, theta_(i), log_theta_(i), sum_ps_(i), drow, kappa);
    dens_rest_(i) = ll == kNegInf ? kNegInf
                                  : ll - (-theta_(i) * (1.0 - sum_ps_(i))) - log_theta_(i);
    if (meas) ll += dirich_(i);
    if (std::isnan(ll)) ll = kNegInf;
    loglik_i_(i) = ll;
    total += ll;
  }
  loglik_total_ = likelihood_enabled() ? total : 0.0;
  if (!likelihood_enabled()) loglik_i_.setZero();
}

double Fitter::loglik_full_recompute() const {
  if (!likelihood_enabled()) return 0.0;
  return log_likelihood(state_, data_, spec_);
}

// --- trial evaluations -------------------------------------------------------

double Fitter::loglik_with_xi0(double v) const { return loglik_with_theta_shift(v - state_.xi0, -1); }
double Fitter::loglik_with_xi(Eigen::Index k, double v) const {
  return loglik_with_theta_shift(v - state_.xi(k), k);
}

// shared path: log theta gets `delta * x` added (k = -1 means intercept, x = 1)
double Fitter::loglik_with_theta_shift(double delta, Eigen::Index k) const {
  if (!likelihood_enabled()) return 0.0;
  const Eigen::Index n = data_.n();
  const bool meas = has_measurement_error(spec_.variant);
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double x = k < 0 ? 1.0 : data_.clinical(i, k);
    double lt = log_theta_(i) + delta * x;
    lt = std::clamp(lt, -kExpClamp, kExpClamp);
    const double th = std::exp(lt);
    double ll = -th * (1.0 - sum_ps_(i));
    if (data_.event(i) == 1) {
      if (dens_rest_(i) == kNegInf) {
        ll = kNegInf;
      } else {
        ll += lt + dens_rest_(i);
      }
    }
    if (meas) ll += dirich_(i);
    if (std::isnan(ll)) ll = kNegInf;
    total += ll;
    if (total == kNegInf) break;
  }
  return total;
}

double Fitter::loglik_with_kappa(double v) const {
  if (!likelihood_enabled()) return 0.0;
  const Eigen::Index n = data_.n(), L = data_.L();
  const bool meas = has_measurement_error(spec_.variant);
  const double lgam = std::lgamma(1.0 + 1.0 / v);
  double total = 0.0;
  double drow[32];
  for (Eigen::Index i = 0; i < n; ++i) {
    double sp = 0.0;
    for (Eigen::Index l = 0; l < L; ++l) {
      const double loglam = log_mu_(i, l) - lgam;
      double arg = v * (log_time_(i) - loglam);
      if (arg > kExpClamp) arg = kExpClamp;
      const double w = std::exp(arg);
      const double s = std::exp(-w);
      sp += p_(i, l) * s;
      drow[l] = log_p_(i, l) - v * loglam - w;
    }
    double ll = survival_loglik_row(i, theta_(i), log_theta_(i), std::max(sp, 1e-300), drow, v);
    if (meas) ll += dirich_(i);
    if (std::isnan(ll)) ll = kNegInf;
    total += ll;
    if (total == kNegInf) break;
  }
  return total;
}

double Fitter::loglik_with_cell_shift(Eigen::Index l, const double* shift_per_subject,
                                      double uniform_shift) const {
  if (!likelihood_enabled()) return 0.0;
  const Eigen::Index n = data_.n(), L = data_.L();
  const bool meas = has_measurement_error(spec_.variant);
  const double kappa = state_.kappa;
  double total = 0.0;
  double drow[32];
  for (Eigen::Index i = 0; i < n; ++i) {
    const double shift = shift_per_subject ? shift_per_subject[i] : uniform_shift;
    const double loglam = log_mu_(i, l) + shift - lgam_kappa_;
    double arg = kappa * (log_time_(i) - loglam);
    if (arg > kExpClamp) arg = kExpClamp;
    const double w = std::exp(arg);
    const double s = std::exp(-w);
    const double sp = std::max(sum_ps_(i) - p_(i, l) * surv_(i, l) + p_(i, l) * s, 1e-300);
    for (Eigen::Index ll2 = 0; ll2 < L; ++ll2) drow[ll2] = log_p_(i, ll2) + wterm_(i, ll2);
    drow[l] = log_p_(i, l) - kappa * loglam - w;
    double ll = survival_loglik_row(i, theta_(i), log_theta_(i), sp, drow, kappa);
    if (meas) ll += dirich_(i);
    if (std::isnan(ll)) ll = kNegInf;
    total += ll;
    if (total == kNegInf) break;
  }
  return total;
}

double Fitter::loglik_with_beta(Eigen::Index j, Eigen::Index l, double v) const {
  if (!likelihood_enabled()) return 0.0;
  const double delta = v - state_.beta[static_cast<size_t>(l)](j);
  if (delta == 0.0) return loglik_total_;
  const auto& x = data_.cell_covariates[static_cast<size_t>(l)];
  scratch_shift_.resize(data_.n());
  for (Eigen::Index i = 0; i < data_.n(); ++i) scratch_shift_(i) = delta * x(i, j);
  return loglik_with_cell_shift(l, scratch_shift_.data(), 0.0);
}

double Fitter::loglik_with_beta0(Eigen::Index l, double v) const {
  if (!likelihood_enabled()) return 0.0;
  const double delta = v - state_.beta0(l);
  if (delta == 0.0) return loglik_total_;
  return loglik_with_cell_shift(l, nullptr, delta);
}

double Fitter::loglik_with_alpha_shift(Eigen::Index l, const double* shift_per_subject,
                                       double uniform_shift) const {
  if (!likelihood_enabled()) return 0.0;
  const Eigen::Index n = data_.n(), L = data_.L();
  const double kappa = state_.kappa;
  (void)kappa;
  double total = 0.0;
  double larow[32], drow[32];
  for (Eigen::Index i = 0; i < n; ++i) {
    const double shift = shift_per_subject ? shift_per_subject[i] : uniform_shift;
    for (Eigen::Index l2 = 0; l2 < L; ++l2) larow[l2] = log_alpha_(i, l2);
    larow[l] = std::clamp(larow[l] + shift, -kExpClamp, kExpClamp);
    double m = kNegInf;
    for (Eigen::Index l2 = 0; l2 < L; ++l2) m = std::max(m, larow[l2]);
    double acc = 0.0;
    for (Eigen::Index l2 = 0; l2 < L; ++l2) acc += std::exp(larow[l2] - m);
    const double la0 = m + std::log(acc);
    double sp = 0.0;
    for (Eigen::Index l2 = 0; l2 < L; ++l2) {
      const double lp = larow[l2] - la0;
      sp += std::exp(lp) * surv_(i, l2);
      drow[l2] = lp + wterm_(i, l2);
    }
    double ll = survival_loglik_row(i, theta_(i), log_theta_(i), std::max(sp, 1e-300), drow,
                                    state_.kappa);
    // Dirichlet factor: only column l's alpha changed
    const double alpha_new = std::exp(larow[l]);
    const double aterm_new =
        (alpha_new - 1.0) * std::log(data_.proportions(i, l)) - std::lgamma(alpha_new);
    const double dir = dirich_(i) - aterm_(i, l) + aterm_new - lg_alpha0_(i) + std::lgamma(std::exp(la0));
    ll += dir;
    if (std::isnan(ll)) ll = kNegInf;
    total += ll;
    if (total == kNegInf) break;
  }
  return total;
}

double Fitter::loglik_with_zeta(Eigen::Index j, Eigen::Index l, double v) const {
  if (!likelihood_enabled()) return 0.0;
  const double delta = v - state_.zeta[static_cast<size_t>(l)](j);
  if (delta == 0.0) return loglik_total_;
  const auto& x = data_.cell_covariates[static_cast<size_t>(l)];
  scratch_shift_.resize(data_.n());
  for (Eigen::Index i = 0; i < data_.n(); ++i) scratch_shift_(i) = delta * x(i, j);
  return loglik_with_alpha_shift(l, scratch_shift_.data(), 0.0);
}

double Fitter::loglik_with_zeta0(Eigen::Index l, double v) const {
  if (!likelihood_enabled()) return 0.0;
  const double delta = v - state_.zeta0(l);
  if (delta == 0.0) return loglik_total_;
  return loglik_with_alpha_shift(l, nullptr, delta);
}

// --- commits -----------------------------------------------------------------

void Fitter::commit_xi0(double v) {
  state_.xi0 = v;
  refresh_theta();
  recompute_subject_logliks();
}
void Fitter::commit_xi(Eigen::Index k, double v) {
  state_.xi(k) = v;
  refresh_theta();
  recompute_subject_logliks();
}
void Fitter::refresh_theta() {
  const Eigen::Index n = data_.n();
  log_theta_ = VectorXd::Constant(n, state_.xi0);
  if (data_.d() > 0) log_theta_ += data_.clinical * state_.xi;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (log_theta_(i) > kExpClamp || log_theta_(i) < -kExpClamp) {
      ++clamp_count_;
      log_theta_(i) = std::clamp(log_theta_(i), -kExpClamp, kExpClamp);
    }
    theta_(i) = std::exp(log_theta_(i));
  }
}
void Fitter::commit_kappa(double v) {
  state_.kappa = v;
  refresh_all_weibull();
  recompute_subject_logliks();
}
void Fitter::refresh_all_weibull() {
  lgam_kappa_ = std::lgamma(1.0 + 1.0 / state_.kappa);
  for (Eigen::Index l = 0; l < data_.L(); ++l) refresh_cell_survival_nocommit(l);
}
void Fitter::commit_beta(Eigen::Index j, Eigen::Index l, double v) {
  state_.beta[static_cast<size_t>(l)](j) = v;
  refresh_cell_survival_nocommit(l);
  recompute_subject_logliks();
}
void Fitter::commit_beta0(Eigen::Index l, double v) {
  state_.beta0(l) = v;
  refresh_cell_survival_nocommit(l);
  recompute_subject_logliks();
}
void Fitter::refresh_cell_survival(Eigen::Index l) {
  refresh_cell_survival_nocommit(l);
  recompute_subject_logliks();
}
void Fitter::commit_zeta(Eigen::Index j, Eigen::Index l, double v) {
  state_.zeta[static_cast<size_t>(l)](j) = v;
  refresh_alpha_block(l);
}
void Fitter::commit_zeta0(Eigen::Index l, double v) {
  state_.zeta0(l) = v;
  refresh_alpha_block(l);
}
void Fitter::refresh_alpha_block(Eigen::Index l) {
  refresh_alpha_col(l);
  refresh_proportions();
  recompute_subject_logliks();
}

// --- samplers over the conditionals ------------------------------------------

void Fitter::slice_update_scalar(const std::string& block, const LogDensity& ld, double current,
                                 Rng& rng, const std::function<void(double)>& commit) {
  const double v = slice_sample(ld, current, kSliceWidth, kSliceMaxSteps, rng, &diag_[block]);
  if (v != current) commit(v);
}

void Fitter::arms_update_coord(const std::string& block, const LogDensity& ld, double current,
                               double prior_sd, Rng& rng, const std::function<void(double)>& commit) {
  // The initial abscissae must not depend on the current point: the
  // Metropolis correction assumes the envelope is an independence proposal,
  // and these conditionals are not globally log-concave. A fixed prior-scale
  // grid keeps the kernel exact; the in-call refinement finds the mode.
  const std::vector<double> init = {-2.0 * prior_sd, -prior_sd, 0.0, prior_sd, 2.0 * prior_sd};
  const double v = arms_sample(ld, init, current, rng, &diag_[block]);
  if (v != current) commit(v);
}

void Fitter::gibbs_variances_cure(Rng& rng) {
  const auto cp = conjugate_posteriors(state_, data_, spec_.hyper);
  note("gibbs_v02");
  state_.v02 = gibbs_draw_invgamma(cp.v02.shape, cp.v02.rate, rng);
  note("gibbs_v2");
  state_.v2 = gibbs_draw_invgamma(cp.v2.shape, cp.v2.rate, rng);
}

void Fitter::gibbs_variances_beta(Eigen::Index l, Rng& rng) {
  const auto& h = spec_.hyper;
  const auto sl = static_cast<size_t>(l);
  note("gibbs_tau2_l");
  const double n_active = static_cast<double>(state_.gamma[sl].sum());
  state_.tau2(l) = gibbs_draw_invgamma(h.a_tau + 0.5 * n_active,
                                       h.b_tau + 0.5 * state_.beta[sl].squaredNorm(), rng);
  note("gibbs_tau02");
  state_.tau02 = gibbs_draw_invgamma(h.a_tau0 + 0.5 * static_cast<double>(data_.L()),
                                     h.b_tau0 + 0.5 * state_.beta0.squaredNorm(), rng);
}

void Fitter::gibbs_variances_zeta(Eigen::Index l, Rng& rng) {
  const auto& h = spec_.hyper;
  const auto sl = static_cast<size_t>(l);
  note("gibbs_w2_l");
  const double n_active = static_cast<double>(state_.eta[sl].sum());
  state_.w2(l) = gibbs_draw_invgamma(h.a_w + 0.5 * n_active,
                                     h.b_w + 0.5 * state_.zeta[sl].squaredNorm(), rng);
  note("gibbs_w02");
  state_.w02 = gibbs_draw_invgamma(h.a_w0 + 0.5 * static_cast<double>(data_.L()),
                                   h.b_w0 + 0.5 * state_.zeta0.squaredNorm(), rng);
}

void Fitter::gibbs_pi(Rng& rng) {
  note("gibbs_pi");
  const auto& h = spec_.hyper;
  for (Eigen::Index l = 0; l < data_.L(); ++l) {
    const auto sl = static_cast<size_t>(l);
    const double pd = static_cast<double>(data_.p(l));
    const double b = h.beta_b_pi(data_.p(l));
    for (Eigen::Index j = 0; j < data_.p(l); ++j) {
      const double g = static_cast<double>(state_.gamma[sl](j));
      state_.pi[sl](j) = gibbs_draw_beta(h.a_pi + g, b + pd - g, rng);
    }
  }
}

void Fitter::gibbs_rho(Rng& rng) {
  note("gibbs_rho");
  const auto& h = spec_.hyper;
  for (Eigen::Index l = 0; l < data_.L(); ++l) {
    const auto sl = static_cast<size_t>(l);
    const double pd = static_cast<double>(data_.p(l));
    const double b = h.beta_b_rho(data_.p(l));
    for (Eigen::Index j = 0; j < data_.p(l); ++j) {
      const double e = static_cast<double>(state_.eta[sl](j));
      state_.rho[sl](j) = gibbs_draw_beta(h.a_rho + e, b + pd - e, rng);
    }
  }
}

double Fitter::indicator_prior_delta(IndicatorKind kind, Eigen::Index l, Eigen::Index j, int to) const {
  const auto sl = static_cast<size_t>(l);
  const int sign = to == 1 ? 1 : -1;
  if (is_mrf(spec_.variant)) {
    const MrfGraph& g = kind == IndicatorKind::Gamma ? *spec_.graph_beta : *spec_.graph_zeta;
    const Eigen::Index flat = flat_offset_[sl] + j;
    double nb = 0.0;
    for (const auto& [other, w] : g.neighbors(flat)) {
      const Eigen::Index ol = flat_block(other);
      const Eigen::Index oj = other - flat_offset_[static_cast<size_t>(ol)];
      const int ind = kind == IndicatorKind::Gamma ? state_.gamma[static_cast<size_t>(ol)](oj)
                                                   : state_.eta[static_cast<size_t>(ol)](oj);
      if (ind == 1) nb += w;
    }
    return sign * (g.a + 2.0 * g.b * nb);
  }
  const double prob = kind == IndicatorKind::Gamma ? state_.pi[sl](j) : state_.rho[sl](j);
  return sign * (std::log(prob) - std::log1p(-prob));
}

Eigen::Index Fitter::flat_block(Eigen::Index flat) const {
  Eigen::Index l = 0;
  while (flat >= flat_offset_[static_cast<size_t>(l) + 1]) ++l;
  return l;
}

bool Fitter::update_indicator(IndicatorKind kind, Eigen::Index l, Rng& rng) {
  if (!has_selection(spec_.variant))
    throw contract_error("indicator updates do not apply to noBVS variants");
  if (kind == IndicatorKind::Eta && !has_measurement_error(spec_.variant))
    throw contract_error("eta indicators do not exist without the measurement-error submodel");
  const auto sl = static_cast<size_t>(l);
  const Eigen::Index pl = data_.p(l);
  auto& diag = diag_[kind == IndicatorKind::Gamma ? "mh_gamma" : "mh_eta"];
  ++diag.proposals;

  const Eigen::Index j = static_cast<Eigen::Index>(rng.uniform_index(static_cast<std::uint64_t>(pl)));
  const int cur = kind == IndicatorKind::Gamma ? state_.gamma[sl](j) : state_.eta[sl](j);
  const int to = 1 - cur;
  double coef_new = 0.0;
  if (to == 1) {
    const double slab_sd =
        std::sqrt(kind == IndicatorKind::Gamma ? state_.tau2(l) : state_.w2(l));
    coef_new = rng.normal(0.0, slab_sd);
  }
  const double ll_new = kind == IndicatorKind::Gamma ? loglik_with_beta(j, l, coef_new)
                                                     : loglik_with_zeta(j, l, coef_new);
  const double delta = (ll_new - loglik_total_) + indicator_prior_delta(kind, l, j, to);
  if (std::log(rng.uniform()) <= delta) {
    if (kind == IndicatorKind::Gamma) {
      state_.gamma[sl](j) = to;
      commit_beta(j, l, coef_new);
    } else {
      state_.eta[sl](j) = to;
      commit_zeta(j, l, coef_new);
    }
    ++diag.acceptances;
    return true;
  }
  return false;
}

// --- the Algorithm-1 sweep -----------------------------------------------------

void Fitter::note(const std::string& label) {
  if (tracing_) trace_.push_back(label);
}

void Fitter::stage_guard(const char* stage, const ParameterState& before) {
  if (std::isfinite(loglik_total_)) return;
  state_ = before;
  rebuild_caches();
  ++incident_count_;
  if (incident_count_ > cfg_.max_incidents)
    throw fit_error(std::string("more than ") + std::to_string(cfg_.max_incidents) +
                    " non-finite-likelihood incidents (last in stage '" + stage + "')");
}

void Fitter::sweep(Rng& rng) {
  const bool meas = has_measurement_error(spec_.variant);
  const bool sel = has_selection(spec_.variant);
  const bool ber = is_bernoulli(spec_.variant);
  const Eigen::Index L = data_.L();

  // (a) cure-fraction variance hyperparameters
  gibbs_variances_cure(rng);

  // (b) xi0 and xi via slice sampling, then theta refresh
  {
    ParameterState before = state_;
    note("slice_xi0");
    slice_update_scalar("slice_xi",
                        LogDensity{[this](double x) { return loglik_with_xi0(x) + normal_kernel(x, state_.v02); }},
                        state_.xi0, rng, [this](double v) { commit_xi0(v); });
    for (Eigen::Index k = 0; k < data_.d(); ++k) {
      note("slice_xi_" + std::to_string(k + 1));
      slice_update_scalar(
          "slice_xi",
          LogDensity{[this, k](double x) { return loglik_with_xi(k, x) + normal_kernel(x, state_.v2); }},
          state_.xi(k), rng, [this, k](double v) { commit_xi(k, v); });
    }
    note("refresh_theta");
    stage_guard("xi", before);
  }

  // (c) measurement-error block
  if (meas) {
    ParameterState before = state_;
    const Eigen::Index lpick = static_cast<Eigen::Index>(rng.uniform_index(static_cast<std::uint64_t>(L)));
    note("choose_eta_block_" + std::to_string(lpick + 1));
    if (sel) {
      note("mh_eta");
      update_indicator(IndicatorKind::Eta, lpick, rng);
      if (ber) gibbs_rho(rng);
    }
    gibbs_variances_zeta(lpick, rng);
    const auto slp = static_cast<size_t>(lpick);
    note("arms_zeta_active");
    for (Eigen::Index j = 0; j < data_.p(lpick); ++j) {
      if (state_.eta[slp](j) != 1) continue;
      arms_update_coord("arms_zeta",
                        LogDensity{[this, j, lpick](double x) {
                          return loglik_with_zeta(j, lpick, x) + normal_kernel(x, state_.w2(lpick));
                        }},
                        state_.zeta[slp](j), std::sqrt(state_.w2(lpick)), rng,
                        [this, j, lpick](double v) { commit_zeta(j, lpick, v); });
    }
    note("arms_zeta0");
    arms_update_coord("arms_zeta0",
                      LogDensity{[this, lpick](double x) {
                        return loglik_with_zeta0(lpick, x) + normal_kernel(x, state_.w02);
                      }},
                      state_.zeta0(lpick), std::sqrt(state_.w02), rng,
                      [this, lpick](double v) { commit_zeta0(lpick, v); });
    note("arms_zeta_all");
    for (Eigen::Index l = 0; l < L; ++l) {
      const auto sl = static_cast<size_t>(l);
      for (Eigen::Index j = 0; j < data_.p(l); ++j) {
        if (state_.eta[sl](j) != 1) continue;
        arms_update_coord("arms_zeta",
                          LogDensity{[this, j, l](double x) {
                            return loglik_with_zeta(j, l, x) + normal_kernel(x, state_.w2(l));
                          }},
                          state_.zeta[sl](j), std::sqrt(state_.w2(l)), rng,
                          [this, j, l](double v) { commit_zeta(j, l, v); });
      }
    }
    note("refresh_p");
    stage_guard("zeta", before);
  }

  // (e) Weibull shape
  {
    ParameterState before = state_;
    note("slice_kappa");
    const auto& h = spec_.hyper;
    slice_update_scalar("slice_kappa",
                        LogDensity{[this, &h](double x) {
                                     if (!(x > 0.0)) return kNegInf;
                                     return loglik_with_kappa(x) + (h.a_kappa - 1.0) * std::log(x) -
                                            h.b_kappa * x;
                                   },
                                   0.0},
                        state_.kappa, rng, [this](double v) { commit_kappa(v); });
    note("refresh_weibull");
    stage_guard("kappa", before);
  }

  // (f) survival-side coefficients
  {
    ParameterState before = state_;
    const Eigen::Index lpick = static_cast<Eigen::Index>(rng.uniform_index(static_cast<std::uint64_t>(L)));
    note("choose_gamma_block_" + std::to_string(lpick + 1));
    if (sel) {
      note("mh_gamma");
      update_indicator(IndicatorKind::Gamma, lpick, rng);
      if (ber) gibbs_pi(rng);
    }
    gibbs_variances_beta(lpick, rng);
    const auto slp = static_cast<size_t>(lpick);
    note("arms_beta_active");
    for (Eigen::Index j = 0; j < data_.p(lpick); ++j) {
      if (state_.gamma[slp](j) != 1) continue;
      arms_update_coord("arms_beta",
                        LogDensity{[this, j, lpick](double x) {
                          return loglik_with_beta(j, lpick, x) + normal_kernel(x, state_.tau2(lpick));
                        }},
                        state_.beta[slp](j), std::sqrt(state_.tau2(lpick)), rng,
                        [this, j, lpick](double v) { commit_beta(j, lpick, v); });
    }
    note("arms_beta0");
    arms_update_coord("arms_beta0",
                      LogDensity{[this, lpick](double x) {
                        return loglik_with_beta0(lpick, x) + normal_kernel(x, state_.tau02);
                      }},
                      state_.beta0(lpick), std::sqrt(state_.tau02), rng,
                      [this, lpick](double v) { commit_beta0(lpick, v); });
    note("arms_beta_all");
    for (Eigen::Index l = 0; l < L; ++l) {
      const auto sl = static_cast<size_t>(l);
      for (Eigen::Index j = 0; j < data_.p(l); ++j) {
        if (state_.gamma[sl](j) != 1) continue;
        arms_update_coord("arms_beta",
                          LogDensity{[this, j, l](double x) {
                            return loglik_with_beta(j, l, x) + normal_kernel(x, state_.tau2(l));
                          }},
                          state_.beta[sl](j), std::sqrt(state_.tau2(l)), rng,
                          [this, j, l](double v) { commit_beta(j, l, v); });
      }
    }
    note("refresh_mu_weibull");
    stage_guard("beta", before);
  }
}

ChainOutput Fitter::run(int chain_id, Rng rng) {
  const auto t_start = std::chrono::steady_clock::now();
  ChainOutput out;
  out.chain_id = chain_id;
  init_state(rng);

  const long n_rec = cfg_.n_recorded();
  out.draws.reserve(static_cast<size_t>(n_rec));
  out.loglik.reserve(static_cast<size_t>(n_rec));
  if (cfg_.record_pointwise) out.pointwise_loglik.resize(data_.n(), n_rec);

  long recorded = 0;
  for (long iter = 0; iter < cfg_.n_iterations; ++iter) {
    tracing_ = cfg_.trace_blocks && iter < 2;
    sweep(rng);
    tracing_ = false;
    if (cfg_.debug_checks) {
      const double full = loglik_full_recompute();
      const double tol = 1e-10 * std::max(1.0, std::abs(full));
      if (std::isfinite(full) != std::isfinite(loglik_total_) ||
          (std::isfinite(full) && std::abs(full - loglik_total_) > tol))
        throw fit_error("cached log likelihood drifted from the full recompute: " +
                        std::to_string(loglik_total_) + " vs " + std::to_string(full));
    }
    if (iter < cfg_.n_warmup) {
      if (out.warmup_head.size() < 100) out.warmup_head.push_back(state_);
      continue;
    }
    if ((iter - cfg_.n_warmup + 1) % cfg_.thin != 0) continue;
    ParameterState snap = state_;
    if (!cfg_.record_pi_rho) {
      snap.pi.clear();
      snap.rho.clear();
    }
    out.draws.push_back(std::move(snap));
    out.loglik.push_back(loglik_total_);
    if (cfg_.record_pointwise) out.pointwise_loglik.col(recorded) = loglik_i_;
    ++recorded;
  }
  out.diagnostics = diag_;
  out.clamp_count = clamp_count_;
  out.incident_count = incident_count_;
  out.trace = trace_;
  out.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return out;
}

// ---------------------------------------------------------------------------
// multi-chain driver and diagnostics
// ---------------------------------------------------------------------------

ChainOutput run_chain(const SurvivalDataset& data, const ModelSpec& spec, const RunConfig& cfg,
                      int chain_id) {
  Fitter fitter(data, spec, cfg);
  return fitter.run(chain_id, Rng(cfg.seed, static_cast<std::uint64_t>(chain_id) + 1));
}

FitResult run_fit(const SurvivalDataset& data, const ModelSpec& spec, const RunConfig& cfg) {
  cfg.validate();
  FitResult result;
  result.spec = spec;
  result.config = cfg;
  result.chains.resize(static_cast<size_t>(cfg.n_chains));
  std::vector<std::string> failures(static_cast<size_t>(cfg.n_chains));

  const int workers = std::min(cfg.threads, cfg.n_chains);
  std::vector<std::thread> pool;
  std::vector<int> next_chain{0};
  std::mutex mu;
  auto work = [&] {
    for (;;) {
      int c;
      {
        std::lock_guard<std::mutex> lock(mu);
        if (next_chain[0] >= cfg.n_chains) return;
        c = next_chain[0]++;
      }
      try {
        result.chains[static_cast<size_t>(c)] = run_chain(data, spec, cfg, c);
      } catch (const std::exception& e) {
        failures[static_cast<size_t>(c)] = e.what();
      }
    }
  };
  if (workers <= 1) {
    work();
  } else {
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  for (size_t c = 0; c < failures.size(); ++c) {
    if (!failures[c].empty()) {
      result.converged = false;
      result.failure += "chain " + std::to_string(c) + ": " + failures[c] + "; ";
    }
  }

  // convergence diagnostics over complete chains
  std::vector<const ChainOutput*> complete;
  for (const auto& ch : result.chains)
    if (!ch.draws.empty()) complete.push_back(&ch);
  if (!complete.empty()) {
    for (const auto& name : monitored_scalar_names(data, spec)) {
      std::vector<std::vector<double>> seqs;
      for (const auto* ch : complete) seqs.push_back(extract_scalar(*ch, name));
      result.rhat[name] = split_rhat(seqs);
      result.ess[name] = effective_sample_size(seqs);
    }
  }
  return result;
}

std::vector<std::string> monitored_scalar_names(const SurvivalDataset& data, const ModelSpec& spec) {
  std::vector<std::string> names{"xi0", "kappa", "v2", "v02", "tau02", "loglik"};
  for (Eigen::Index k = 0; k < data.d(); ++k) names.push_back("xi_" + std::to_string(k + 1));
  for (Eigen::Index l = 0; l < data.L(); ++l) {
    names.push_back("beta0_" + std::to_string(l + 1));
    names.push_back("tau2_" + std::to_string(l + 1));
  }
  if (has_measurement_error(spec.variant)) {
    names.push_back("w02");
    for (Eigen::Index l = 0; l < data.L(); ++l) {
      names.push_back("zeta0_" + std::to_string(l + 1));
      names.push_back("w2_" + std::to_string(l + 1));
    }
  }
  return names;
}

std::vector<double> extract_scalar(const ChainOutput& chain, const std::string& name) {
  std::vector<double> out;
  out.reserve(chain.draws.size());
  auto idx_of = [](const std::string& s, size_t pos) {
    return static_cast<Eigen::Index>(std::stol(s.substr(pos)) - 1);
  };
  for (size_t t = 0; t < chain.draws.size(); ++t) {
    const auto& s = chain.draws[t];
    double v;
    if (name == "xi0") v = s.xi0;
    else if (name == "kappa") v = s.kappa;
    else if (name == "v2") v = s.v2;
    else if (name == "v02") v = s.v02;
    else if (name == "tau02") v = s.tau02;
    else if (name == "w02") v = s.w02;
    else if (name == "loglik") v = chain.loglik[t];
    else if (name.rfind("xi_", 0) == 0) v = s.xi(idx_of(name, 3));
    else if (name.rfind("beta0_", 0) == 0) v = s.beta0(idx_of(name, 6));
    else if (name.rfind("zeta0_", 0) == 0) v = s.zeta0(idx_of(name, 6));
    else if (name.rfind("tau2_", 0) == 0) v = s.tau2(idx_of(name, 5));
    else if (name.rfind("w2_", 0) == 0) v = s.w2(idx_of(name, 3));
    else throw domain_error("unknown monitored scalar '" + name + "'");
    out.push_back(v);
  }
  return out;
}

double split_rhat(const std::vector<std::vector<double>>& chains) {
  std::vector<std::vector<double>> halves;
  size_t min_len = std::numeric_limits<size_t>::max();
  for (const auto& c : chains) min_len = std::min(min_len, c.size());
  if (min_len < 4 || chains.empty()) return std::numeric_limits<double>::quiet_NaN();
  // duplicated chains (identical seeds) make the diagnostic meaningless
  for (size_t a = 0; a + 1 < chains.size(); ++a)
    for (size_t b = a + 1; b < chains.size(); ++b)
      if (std::equal(chains[a].begin(), chains[a].begin() + static_cast<long>(min_len),
                     chains[b].begin()))
        return std::numeric_limits<double>::quiet_NaN();
  const size_t half = min_len / 2;
  for (const auto& c : chains) {
    halves.emplace_back(c.begin(), c.begin() + static_cast<long>(half));
    halves.emplace_back(c.begin() + static_cast<long>(min_len - half), c.begin() + static_cast<long>(min_len));
  }
  const double m = static_cast<double>(halves.size());
  const double n = static_cast<double>(half);
  std::vector<double> means;
  double grand = 0.0;
  double w_acc = 0.0;
  for (const auto& hseq : halves) {
    double mean = 0.0;
    for (double v : hseq) mean += v;
    mean /= n;
    means.push_back(mean);
    grand += mean;
    double s2 = 0.0;
    for (double v : hseq) s2 += (v - mean) * (v - mean);
    s2 /= (n - 1.0);
    w_acc += s2;
  }
  grand /= m;
  const double W = w_acc / m;
  double B = 0.0;
  for (double mean : means) B += (mean - grand) * (mean - grand);
  B *= n / (m - 1.0);
  if (!(W > 0.0)) return std::numeric_limits<double>::quiet_NaN();
  const double var_plus = (n - 1.0) / n * W + B / n;
  return std::sqrt(var_plus / W);
}

double effective_sample_size(const std::vector<std::vector<double>>& chains) {
  size_t min_len = std::numeric_limits<size_t>::max();
  for (const auto& c : chains) min_len = std::min(min_len, c.size());
  if (chains.empty() || min_len < 4) return std::numeric_limits<double>::quiet_NaN();
  const size_t m = chains.size();
  const size_t n = min_len;

  std::vector<double> means(m, 0.0), vars(m, 0.0);
  for (size_t j = 0; j < m; ++j) {
    for (size_t i = 0; i < n; ++i) means[j] += chains[j][i];
    means[j] /= static_cast<double>(n);
    for (size_t i = 0; i < n; ++i) vars[j] += (chains[j][i] - means[j]) * (chains[j][i] - means[j]);
    vars[j] /= static_cast<double>(n - 1);
  }
  double W = 0.0;
  for (double v : vars) W += v;
  W /= static_cast<double>(m);
  double grand = 0.0;
  for (double mu : means) grand += mu;
  grand /= static_cast<double>(m);
  double B = 0.0;
  for (double mu : means) B += (mu - grand) * (mu - grand);
  B = m > 1 ? B * static_cast<double>(n) / static_cast<double>(m - 1) : 0.0;
  const double var_plus = (static_cast<double>(n) - 1.0) / static_cast<double>(n) * W +
                          (m > 1 ? B / static_cast<double>(n) : W / static_cast<double>(n));
  if (!(var_plus > 0.0)) return std::numeric_limits<double>::quiet_NaN();

  // Geyer initial positive sequence on the multi-chain autocorrelations
  double rho_sum = 0.0;
  const size_t max_lag = std::min(n - 1, static_cast<size_t>(1000));
  double prev_pair = std::numeric_limits<double>::infinity();
  for (size_t t = 1; t + 1 <= max_lag; t += 2) {
    double rho_t = 0.0, rho_t1 = 0.0;
    for (size_t lag = t; lag <= t + 1; ++lag) {
      double acov = 0.0;
      for (size_t j = 0; j < m; ++j)
        for (size_t i = lag; i < n; ++i)
          acov += (chains[j][i] - means[j]) * (chains[j][i - lag] - means[j]);
      acov /= static_cast<double>(m * (n - lag));
      const double rho = 1.0 - (W - acov) / var_plus;
      if (lag == t) rho_t = rho;
      else rho_t1 = rho;
    }
    double pair = rho_t + rho_t1;
    if (pair < 0.0) break;
    pair = std::min(pair, prev_pair);  // initial monotone sequence
    prev_pair = pair;
    rho_sum += pair;
  }
  const double denom = 1.0 + 2.0 * rho_sum;
  return static_cast<double>(m * n) / std::max(denom, 1e-12);
}

// samplers-module wrapper: one block move on a standalone state
bool indicator_block_update(IndicatorKind kind, Eigen::Index l, ParameterState& state,
                            const SurvivalDataset& data, const ModelSpec& spec, Rng& rng,
                            SamplerDiagnostics* diag) {
  RunConfig cfg;
  cfg.n_iterations = 1;
  cfg.n_warmup = 0;
  Fitter fitter(data, spec, cfg);
  fitter.set_state(state);
  const bool accepted = fitter.update_indicator(kind, l, rng);
  state = fitter.state();
  if (diag) *diag += fitter.diagnostics()[kind == IndicatorKind::Gamma ? "mh_gamma" : "mh_eta"];
  return accepted;
}

}  // namespace gptcm
