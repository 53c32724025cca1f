#include "gptcm/simulation.hpp"

#include <Eigen/Cholesky>
#include <cmath>

#include "gptcm/model.hpp"
#include "gptcm/samplers.hpp"

namespace gptcm {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

SimConfig SimConfig::low_dim(std::uint64_t seed) {
  SimConfig cfg;
  cfg.seed = seed;
  cfg.p = 10;
  cfg.fill_default_coefficients();
  return cfg;
}

SimConfig SimConfig::high_dim(std::uint64_t seed) {
  SimConfig cfg;
  cfg.seed = seed;
  cfg.p = 200;
  cfg.fill_default_coefficients();
  return cfg;
}

SimConfig SimConfig::cox_misspec_design(std::uint64_t seed) {
  SimConfig cfg;
  cfg.mode = Mode::cox_misspec;
  cfg.seed = seed;
  cfg.p = 5;
  cfg.cox_effects.resize(5);
  cfg.cox_effects << -0.8, -2.0, -2.0, 1.0, 1.0;
  return cfg;
}

void SimConfig::fill_default_coefficients() {
  if (L != 3) throw domain_error("the standard coefficient tables require L = 3");
  if (p < 7) throw domain_error("the standard coefficient tables require p >= 7");
  xi_true.resize(2);
  xi_true << 0.6, -1.0;
  auto pad = [this](std::initializer_list<double> head) {
    VectorXd v = VectorXd::Zero(p);
    Eigen::Index j = 0;
    for (double x : head) v(j++) = x;
    return v;
  };
  beta_true = {pad({-1.0, -0.5, 0.8, 0.8, -1.0, 0.0, 0.0}),
               pad({0.0, -0.9, -0.8, 0.0, 1.5, 1.0, 0.0}),
               pad({1.0, 0.0, -0.4, -1.5, 0.0, 0.0, 0.8})};
  zeta_true = {pad({0.7, -0.7, 0.5, -0.5, 1.0, 0.0, 0.0}),
               pad({-0.5, 0.5, 0.0, 1.0, 0.0, -1.0, 0.0}),
               pad({0.0, 0.0, 1.0, -0.5, -0.7, 0.0, 0.0})};
  zeta0_true.resize(3);
  zeta0_true << -0.5, 1.0, 1.2;
}

std::vector<std::string> SimConfig::validation_errors() const {
  std::vector<std::string> errs;
  if (n <= 0 || p <= 0 || L <= 0) errs.push_back("n, p, L must be positive");
  if (!(rho_cross > -1.0 && rho_cross < 1.0)) errs.push_back("rho_cross must lie in (-1,1)");
  for (double r : rho_within)
    if (!(r > -1.0 && r < 1.0)) errs.push_back("rho_within entries must lie in (-1,1)");
  if (mode == Mode::gptcm) {
    if (static_cast<Eigen::Index>(beta_true.size()) != L ||
        static_cast<Eigen::Index>(zeta_true.size()) != L || zeta0_true.size() != L)
      errs.push_back("generating coefficient tables must have one entry per cell type");
    for (const auto& b : beta_true)
      if (b.size() != p) errs.push_back("beta_true entries must have length p");
    for (const auto& z : zeta_true)
      if (z.size() != p) errs.push_back("zeta_true entries must have length p");
  } else {
    if (cox_effects.size() == 0) errs.push_back("cox_effects must be set in cox_misspec mode");
    if (!(cox_baseline > 0.0)) errs.push_back("cox_baseline must be positive");
    if (!(cox_target_censoring > 0.0 && cox_target_censoring < 1.0))
      errs.push_back("cox_target_censoring must lie in (0,1)");
  }
  if (!(kappa_true > 0.0)) errs.push_back("kappa_true must be positive");
  return errs;
}

void SimConfig::validate() const {
  auto errs = validation_errors();
  if (errs.empty()) return;
  std::string msg = "invalid simulation config:";
  for (const auto& e : errs) msg += "\n  - " + e;
  throw domain_error(msg);
}

MatrixXd build_covariance(Eigen::Index p, Eigen::Index L, double rho_cross,
                          const std::vector<double>& rho_within) {
  if (static_cast<Eigen::Index>(rho_within.size()) < L)
    throw domain_error("need one within-block correlation per cell type");
  const Eigen::Index dim = p * L;
  MatrixXd sigma = MatrixXd::Zero(dim, dim);
  for (Eigen::Index l = 0; l < L; ++l) {
    for (Eigen::Index m = 0; m < L; ++m) {
      for (Eigen::Index j = 0; j < p; ++j) {
        for (Eigen::Index k = 0; k < p; ++k) {
          double v = 0.0;
          if (l == m) {
            if (j == k)
              v = 1.0;
            else if (j < 6 && k < 6)
              v = std::pow(rho_within[static_cast<size_t>(l)], std::abs(static_cast<double>(j - k)));
          } else if (j == k) {
            v = rho_cross;
          }
          sigma(l * p + j, m * p + k) = v;
        }
      }
    }
  }
  Eigen::LLT<MatrixXd> llt(sigma);
  if (llt.info() != Eigen::Success) throw domain_error("covariance matrix is not positive definite");
  return sigma;
}

double sample_noncured_time(double theta, const VectorXd& props, const VectorXd& lambdas, double kappa,
                            Rng& rng) {
  if (!(theta > 0.0)) throw domain_error("theta must be positive");
  const double cure = std::exp(-theta);
  const double u = rng.uniform();
  const double target = cure + u * (1.0 - cure);  // S_pop(T) = target
  auto spop = [&](double t) {
    double mix = 0.0;
    for (Eigen::Index l = 0; l < props.size(); ++l) {
      const double arg = kappa * (std::log(t) - std::log(lambdas(l)));
      mix += props(l) * std::exp(-std::exp(std::min(arg, kExpClamp)));
    }
    return std::exp(-theta * (1.0 - mix));
  };
  double hi = 1.0;
  while (spop(hi) > target) {
    hi *= 2.0;
    if (hi > 1e6) throw domain_error("noncured time exceeds the bisection cap of 1e6");
  }
  // bisect in log time so tiny quantiles (small kappa) stay resolvable
  double lo_z = std::log(1e-300), hi_z = std::log(hi);
  double mid = hi;
  for (int it = 0; it < 300; ++it) {
    const double mid_z = 0.5 * (lo_z + hi_z);
    mid = std::exp(mid_z);
    const double s = spop(mid);
    const double dev = (s - cure) / (1.0 - cure);  // conditional survival at mid
    if (std::abs(dev - u) <= 1e-10) break;
    if (s > target)
      lo_z = mid_z;
    else
      hi_z = mid_z;
  }
  return std::max(mid, 1e-300);
}

double sample_noncured_time_mh(double theta, const VectorXd& props, const VectorXd& lambdas,
                               double kappa, Rng& rng, int steps) {
  auto logf = [&](double t) {
    if (!(t > 0.0)) return -kInf;
    return population_log_density(t, theta, props, lambdas, kappa);
  };
  // start near the proportion-weighted scale
  double t = 0.0;
  for (Eigen::Index l = 0; l < props.size(); ++l) t += props(l) * lambdas(l);
  t = std::max(t * 0.5, 1e-6);
  double lf = logf(t);
  const double step_sd = 0.8;
  for (int it = 0; it < steps; ++it) {
    const double tprop = t * std::exp(step_sd * rng.normal());
    const double lfp = logf(tprop);
    // lognormal random walk: Hastings ratio carries the Jacobian t'/t
    if (std::log(rng.uniform()) <= lfp - lf + std::log(tprop) - std::log(t)) {
      t = tprop;
      lf = lfp;
    }
  }
  return t;
}

namespace {

// censoring C = min(Uniform(lo,hi), Exponential(rate))
double draw_censoring(const SimConfig& cfg, Rng& rng) {
  const double c1 = rng.uniform(cfg.censor_unif_lo, cfg.censor_unif_hi);
  const double c2 = rng.exponential(cfg.censor_exp_rate);
  return std::min(c1, c2);
}

}  // namespace

std::pair<SurvivalDataset, SimulationTruth> simulate_gptcm(const SimConfig& cfg) {
  cfg.validate();
  if (cfg.mode != SimConfig::Mode::gptcm) throw domain_error("simulate_gptcm requires gptcm mode");
  const Eigen::Index n = cfg.n, p = cfg.p, L = cfg.L;
  Rng rng(cfg.seed, 1000);

  const MatrixXd sigma = build_covariance(p, L, cfg.rho_cross, cfg.rho_within);
  const MatrixXd chol = Eigen::LLT<MatrixXd>(sigma).matrixL();

  SurvivalDataset ds;
  ds.time.resize(n);
  ds.event.resize(n);
  ds.clinical.resize(n, 2);
  ds.proportions.resize(n, L);
  for (Eigen::Index l = 0; l < L; ++l) ds.cell_covariates.emplace_back(n, p);

  SimulationTruth truth;
  truth.xi0 = cfg.xi0_true;
  truth.xi = cfg.xi_true;
  truth.kappa = cfg.kappa_true;
  truth.beta = cfg.beta_true;
  truth.zeta = cfg.zeta_true;
  truth.zeta0 = cfg.zeta0_true;
  truth.gamma_true.resize(p * L);
  truth.eta_true.resize(p * L);
  for (Eigen::Index l = 0; l < L; ++l)
    for (Eigen::Index j = 0; j < p; ++j) {
      truth.gamma_true(l * p + j) = cfg.beta_true[static_cast<size_t>(l)](j) != 0.0 ? 1 : 0;
      truth.eta_true(l * p + j) = cfg.zeta_true[static_cast<size_t>(l)](j) != 0.0 ? 1 : 0;
    }
  truth.cured.resize(n);
  truth.latent_time.resize(n);
  truth.underlying_p.resize(n, L);

  const double lgam = std::lgamma(1.0 + 1.0 / cfg.kappa_true);
  VectorXd z(p * L), xrow(p * L), alpha(L), props(L), lambdas(L);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double x01 = rng.bernoulli(0.5) ? 1.0 : 0.0;
    const double x02 = rng.normal();
    ds.clinical(i, 0) = x01;
    ds.clinical(i, 1) = x02;
    const double theta = std::exp(cfg.xi0_true + cfg.xi_true(0) * x01 + cfg.xi_true(1) * x02);

    for (Eigen::Index k = 0; k < p * L; ++k) z(k) = rng.normal();
    xrow = chol * z;
    for (Eigen::Index l = 0; l < L; ++l)
      for (Eigen::Index j = 0; j < p; ++j) ds.cell_covariates[static_cast<size_t>(l)](i, j) = xrow(l * p + j);

    for (Eigen::Index l = 0; l < L; ++l) {
      const auto sl = static_cast<size_t>(l);
      const double log_mu = xrow.segment(l * p, p).dot(cfg.beta_true[sl]);  // beta0 = 0 in the generator
      lambdas(l) = std::exp(log_mu - lgam);
      alpha(l) = std::exp(cfg.zeta0_true(l) + xrow.segment(l * p, p).dot(cfg.zeta_true[sl]));
    }
    // the underlying proportions driving survival are the Dirichlet means;
    // the observed compositions are a noisy draw around them
    props = alpha / alpha.sum();
    truth.underlying_p.row(i) = props;
    ds.proportions.row(i) = draw_dirichlet(alpha, rng);

    const double censor = draw_censoring(cfg, rng);
    const double u = rng.uniform();
    double latent;
    if (u <= std::exp(-theta)) {
      truth.cured(i) = 1;
      latent = kInf;
    } else {
      truth.cured(i) = 0;
      latent = sample_noncured_time(theta, props, lambdas, cfg.kappa_true, rng);
    }
    truth.latent_time(i) = latent;
    ds.time(i) = std::min(latent, censor);
    ds.event(i) = latent <= censor ? 1 : 0;
  }
  ds.validate();
  return {std::move(ds), std::move(truth)};
}

std::pair<SurvivalDataset, SimulationTruth> simulate_cox_misspec(const SimConfig& cfg) {
  cfg.validate();
  if (cfg.mode != SimConfig::Mode::cox_misspec)
    throw domain_error("simulate_cox_misspec requires cox_misspec mode");
  const Eigen::Index n = cfg.n;
  const Eigen::Index d = cfg.cox_effects.size();
  const Eigen::Index L = cfg.cox_pseudo_L;
  Rng rng(cfg.seed, 2000);

  MatrixXd x(n, d);
  VectorXd latent(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) x(i, j) = rng.normal();
    const double lin = x.row(i).dot(cfg.cox_effects);
    const double u = rng.uniform();
    latent(i) = std::pow(-std::log(u) / (cfg.cox_baseline * std::exp(lin)), 1.0 / cfg.kappa_true);
  }
  // exponential censoring rate solved so the expected censoring fraction hits
  // the target on this realized sample: mean_i (1 - e^{-r T_i}) = target
  double lo = 1e-12, hi = 1e12;
  for (int it = 0; it < 200; ++it) {
    const double mid = std::sqrt(lo * hi);
    double frac = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) frac += -std::expm1(-mid * latent(i));
    frac /= static_cast<double>(n);
    if (frac > cfg.cox_target_censoring)
      hi = mid;
    else
      lo = mid;
  }
  const double rate = std::sqrt(lo * hi);

  SurvivalDataset ds;
  ds.time.resize(n);
  ds.event.resize(n);
  ds.clinical = x;
  ds.proportions = MatrixXd::Constant(n, L, 1.0 / static_cast<double>(L));
  for (Eigen::Index l = 0; l < L; ++l) ds.cell_covariates.push_back(x);

  SimulationTruth truth;
  truth.xi = cfg.cox_effects;
  truth.xi0 = std::log(cfg.cox_baseline);
  truth.kappa = cfg.kappa_true;
  truth.zeta0 = VectorXd::Zero(L);
  truth.gamma_true = VectorXi::Zero(d * L);
  truth.eta_true = VectorXi::Zero(d * L);
  for (Eigen::Index l = 0; l < L; ++l) {
    truth.beta.push_back(VectorXd::Zero(d));
    truth.zeta.push_back(VectorXd::Zero(d));
  }
  truth.cured = VectorXi::Zero(n);
  truth.latent_time = latent;
  truth.underlying_p = ds.proportions;
  truth.cox_censor_rate = rate;

  for (Eigen::Index i = 0; i < n; ++i) {
    const double censor = rng.exponential(rate);
    ds.time(i) = std::min(latent(i), censor);
    ds.event(i) = latent(i) <= censor ? 1 : 0;
  }
  ds.validate();
  return {std::move(ds), std::move(truth)};
}

std::pair<SurvivalDataset, SimulationTruth> simulate(const SimConfig& cfg) {
  return cfg.mode == SimConfig::Mode::gptcm ? simulate_gptcm(cfg) : simulate_cox_misspec(cfg);
}

MrfGraph build_mrf_graph_from_precision(const MatrixXd& sigma, Eigen::Index p, Eigen::Index L,
                                        double a, double b) {
  if (sigma.rows() != p * L || sigma.cols() != p * L)
    throw domain_error("covariance dimension does not match p*L");
  const MatrixXd precision = sigma.llt().solve(MatrixXd::Identity(p * L, p * L));
  MrfGraph g;
  g.dim = p * L;
  g.a = a;
  g.b = b;
  for (Eigen::Index l = 0; l < L; ++l)
    for (Eigen::Index j = 0; j < p; ++j)
      for (Eigen::Index k = j + 1; k < p; ++k)
        if (std::abs(precision(l * p + j, l * p + k)) > 1e-8) g.add_edge(l * p + j, l * p + k, 1.0);
  for (Eigen::Index j = 0; j < p; ++j)
    for (Eigen::Index l = 0; l < L; ++l)
      for (Eigen::Index m = l + 1; m < L; ++m) g.add_edge(l * p + j, m * p + j, 0.5);
  g.finalize();
  return g;
}

MrfGraph build_same_variable_graph(Eigen::Index p, Eigen::Index L, double a, double b) {
  MrfGraph g;
  g.dim = p * L;
  g.a = a;
  g.b = b;
  for (Eigen::Index j = 0; j < p; ++j)
    for (Eigen::Index l = 0; l < L; ++l)
      for (Eigen::Index m = l + 1; m < L; ++m) g.add_edge(l * p + j, m * p + j, 1.0);
  g.finalize();
  return g;
}

VectorXd SimulationTruth::flatten_beta() const {
  Eigen::Index total = 0;
  for (const auto& b : beta) total += b.size();
  VectorXd out(total);
  Eigen::Index k = 0;
  for (const auto& b : beta)
    for (Eigen::Index j = 0; j < b.size(); ++j) out(k++) = b(j);
  return out;
}

VectorXd SimulationTruth::flatten_zeta() const {
  Eigen::Index total = 0;
  for (const auto& z : zeta) total += z.size();
  VectorXd out(total);
  Eigen::Index k = 0;
  for (const auto& z : zeta)
    for (Eigen::Index j = 0; j < z.size(); ++j) out(k++) = z(j);
  return out;
}

}  // namespace gptcm
