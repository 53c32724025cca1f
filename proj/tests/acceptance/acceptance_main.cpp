// Acceptance suite: one numbered criterion per command-line argument,
// one PASS/FAIL line per criterion. Tolerances are pinned here.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "gptcm/evaluation.hpp"
#include "gptcm/io.hpp"
#include "gptcm/mcmc.hpp"
#include "gptcm/model.hpp"
#include "gptcm/simulation.hpp"
#include "../geweke_helpers.hpp"
#include "../test_helpers.hpp"

using namespace gptcm;
using namespace gptcm::test;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void report(int criterion, bool pass, const std::string& detail) {
  std::printf("criterion %d: %s  %s\n", criterion, pass ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

// pinned designs for the simulation-study criteria
constexpr std::uint64_t kLowDimSeed = 42;
constexpr std::uint64_t kHighDimSeed = 202;
constexpr std::uint64_t kMisspecSeed = 77;
constexpr double kMrfSparsity = 0.10;
constexpr double kMrfBLow = 0.5;
constexpr double kMrfBHigh = 1.0;

ModelSpec mrf_spec(Variant v, Eigen::Index p, Eigen::Index L, double b, const SimConfig& sim) {
  ModelSpec spec;
  spec.variant = v;
  const double a = std::log(kMrfSparsity / (1.0 - kMrfSparsity));
  auto graph = build_mrf_graph_from_precision(build_covariance(p, L, sim.rho_cross, sim.rho_within),
                                              p, L, a, b);
  spec.graph_beta = graph;
  if (v == Variant::MRF2) spec.graph_zeta = graph;
  return spec;
}

struct LowDimArtifacts {
  SurvivalDataset train, valid;
  SimulationTruth truth;
  FitResult fit_mrf2;
};

LowDimArtifacts low_dim_fit() {
  auto cfg = SimConfig::low_dim(kLowDimSeed);
  auto [train, truth] = simulate_gptcm(cfg);
  auto vcfg = cfg;
  vcfg.seed = cfg.seed + 1;
  auto [valid, vtruth] = simulate_gptcm(vcfg);

  RunConfig rc;
  rc.n_iterations = 25000;
  rc.n_warmup = 5000;
  rc.seed = 11;
  auto spec = mrf_spec(Variant::MRF2, cfg.p, cfg.L, kMrfBLow, cfg);
  auto fit = run_fit(train, spec, rc);
  return {std::move(train), std::move(valid), std::move(truth), std::move(fit)};
}

void criterion_1_and_2(bool run1, bool run2) {
  auto art = low_dim_fit();
  const auto& truth = art.truth;

  if (run1) {
    if (!art.fit_mrf2.converged) {
      report(1, false, "MRF2 fit failed: " + art.fit_mrf2.failure);
    } else {
      auto summary = summarize(art.fit_mrf2);
      const double rmse_beta = scaled_rmse(summary.beta_mpm, truth.flatten_beta());
      const double rmse_zeta = scaled_rmse(summary.zeta_mpm, truth.flatten_zeta());
      const auto gm = selection_metrics(summary.mpm_gamma, truth.gamma_true);
      const auto em = selection_metrics(summary.mpm_eta, truth.eta_true);
      const bool pass = rmse_beta <= 0.15 && rmse_zeta <= 0.15 && *gm.accuracy >= 0.95 &&
                        *gm.sensitivity >= 0.95 && *gm.specificity >= 0.95 && *em.accuracy >= 0.95 &&
                        *em.sensitivity >= 0.95 && *em.specificity >= 0.95;
      report(1, pass,
             "low-dim MRF2: rmse(beta)=" + fmt(rmse_beta) + " rmse(zeta)=" + fmt(rmse_zeta) +
                 " gamma(acc/sens/spec)=" + fmt(*gm.accuracy) + "/" + fmt(*gm.sensitivity) + "/" +
                 fmt(*gm.specificity) + " eta=" + fmt(*em.accuracy) + "/" + fmt(*em.sensitivity) +
                 "/" + fmt(*em.specificity) + " (need rmse<=0.15, rates>=0.95)");
    }
  }

  if (run2) {
    auto cfg = SimConfig::low_dim(kLowDimSeed);
    RunConfig rc;
    rc.n_iterations = 25000;
    rc.n_warmup = 5000;
    rc.seed = 11;
    auto spec1 = mrf_spec(Variant::MRF1, cfg.p, cfg.L, kMrfBLow, cfg);
    auto fit1 = run_fit(art.train, spec1, rc);
    if (!fit1.converged || !art.fit_mrf2.converged) {
      report(2, false, "fit failure");
      return;
    }
    // grid up to the 80th percentile of the observed validation times
    std::vector<double> times(art.valid.time.data(), art.valid.time.data() + art.valid.n());
    std::sort(times.begin(), times.end());
    const double t80 = times[static_cast<size_t>(0.8 * (times.size() - 1))];
    VectorXd grid(40);
    for (int g = 0; g < 40; ++g) grid(g) = t80 * (g + 1) / 40.0;

    auto pred2 = predict_survival(art.fit_mrf2, art.valid, grid, PredictMode::PlugInMPM);
    auto pred1 = predict_survival(fit1, art.valid, grid, PredictMode::PlugInMPM);
    const auto bs2 = brier_score(pred2, art.valid);
    const auto bs1 = brier_score(pred1, art.valid);
    auto km = kaplan_meier(art.valid.time, art.valid.event);
    const auto bskm = brier_score(curve_from_step(km, art.valid.n(), grid), art.valid);
    const double i2 = bs2.integrated(), i1 = bs1.integrated(), ikm = bskm.integrated();
    const bool pass = i2 <= i1 && i1 <= ikm;
    report(2, pass,
           "integrated Brier on validation: MRF2=" + fmt(i2) + " MRF1=" + fmt(i1) +
               " KM=" + fmt(ikm) + " (need MRF2 <= MRF1 <= KM)");
  }
}

void criterion_3() {
  auto cfg = SimConfig::cox_misspec_design(kMisspecSeed);
  auto [data, truth] = simulate_cox_misspec(cfg);
  const Eigen::Index p = cfg.cox_effects.size(), L = cfg.cox_pseudo_L;
  const double a = std::log(kMrfSparsity / (1.0 - kMrfSparsity));

  RunConfig rc;
  rc.n_iterations = 25000;
  rc.n_warmup = 5000;
  rc.seed = 13;

  bool all_zero = true;
  std::string zero_detail;
  std::map<Variant, FitResult> fits;
  for (Variant v : {Variant::Ber1, Variant::Ber2, Variant::MRF1, Variant::MRF2}) {
    ModelSpec spec;
    spec.variant = v;
    if (is_mrf(v)) {
      auto graph = build_same_variable_graph(p, L, a, kMrfBLow);
      spec.graph_beta = graph;
      if (v == Variant::MRF2) spec.graph_zeta = graph;
    }
    auto fit = run_fit(data, spec, rc);
    if (!fit.converged) {
      report(3, false, to_string(v) + " fit failed");
      return;
    }
    auto summary = summarize(fit);
    const long selected = summary.mpm_gamma.sum();
    if (selected != 0) all_zero = false;
    zero_detail += to_string(v) + ":" + std::to_string(selected) + " ";
    fits.emplace(v, std::move(fit));
  }

  // MRF1/MRF2 clinical-effect credible intervals cover the truth, exclude 0
  bool ci_ok = true;
  std::string ci_detail;
  for (Variant v : {Variant::MRF1, Variant::MRF2}) {
    auto summary = summarize(fits.at(v));
    for (Eigen::Index k = 0; k < 5; ++k) {
      const auto sc = summary.scalars.at("xi_" + std::to_string(k + 1));
      const double lo = sc.q025, hi = sc.q975;
      const double target = cfg.cox_effects(k);
      const bool covers = lo <= target && target <= hi;
      const bool excludes_zero = lo > 0.0 || hi < 0.0;
      if (!covers || !excludes_zero) {
        ci_ok = false;
        ci_detail += to_string(v) + ".xi_" + std::to_string(k + 1) + "=[" + fmt(lo) + "," + fmt(hi) +
                     "] target " + fmt(target) + "; ";
      }
    }
  }
  report(3, all_zero && ci_ok,
         "misspecification: selected counts (" + zero_detail + "want all 0); " +
             (ci_ok ? "all MRF clinical CIs cover the truth and exclude 0"
                    : "CI failures: " + ci_detail));
}

void criterion_4() {
  auto cfg = SimConfig::high_dim(kHighDimSeed);
  auto [data, truth] = simulate_gptcm(cfg);

  RunConfig rc;
  rc.n_iterations = 100000;
  rc.n_warmup = 40000;
  rc.thin = 10;
  rc.seed = 17;

  auto spec_mrf2 = mrf_spec(Variant::MRF2, cfg.p, cfg.L, kMrfBHigh, cfg);
  ModelSpec spec_ber2;
  spec_ber2.variant = Variant::Ber2;

  FitResult fit_mrf2, fit_ber2;
  std::thread t1([&] { fit_mrf2 = run_fit(data, spec_mrf2, rc); });
  std::thread t2([&] { fit_ber2 = run_fit(data, spec_ber2, rc); });
  t1.join();
  t2.join();
  if (!fit_mrf2.converged || !fit_ber2.converged) {
    report(4, false, "high-dim fit failure");
    return;
  }
  auto s_mrf2 = summarize(fit_mrf2);
  auto s_ber2 = summarize(fit_ber2);
  const auto gm = selection_metrics(s_mrf2.mpm_gamma, truth.gamma_true);
  const auto gb = selection_metrics(s_ber2.mpm_gamma, truth.gamma_true);
  const bool pass = *gm.sensitivity >= 0.9 && *gm.specificity >= 0.99 &&
                    *gm.sensitivity >= *gb.sensitivity;
  std::string detail = "high-dim gamma: MRF2 sens=" + fmt(*gm.sensitivity) +
                       " spec=" + fmt(*gm.specificity) + ", Ber2 sens=" + fmt(*gb.sensitivity) +
                       " (need MRF2 sens>=0.9, spec>=0.99, MRF2>=Ber2)";
  if (!pass && *gm.specificity >= 0.99 && *gm.sensitivity >= *gb.sensitivity)
    detail += "; sensitivity shortfall at desk scale: rerun with 500000/200000 iterations to "
              "check the criterion at full length";
  report(4, pass, detail);
}

void criterion_5() {
  bool ok = true;
  std::string detail;

  // density vs central finite difference of the survival (rel. tol 1e-5)
  {
    Rng rng(5, 0);
    double worst = 0.0;
    for (int rep = 0; rep < 100; ++rep) {
      const int L = 1 + static_cast<int>(rng.uniform_index(3));
      VectorXd p(L), lam(L);
      double acc = 0.0;
      for (int l = 0; l < L; ++l) {
        p(l) = 0.1 + rng.uniform();
        acc += p(l);
        lam(l) = 0.3 + 2.5 * rng.uniform();
      }
      p /= acc;
      const double theta = 0.3 + 3.0 * rng.uniform();
      const double kappa = 0.6 + 2.4 * rng.uniform();
      const double t = 0.2 + 2.0 * rng.uniform();
      const double h = 1e-5 * std::max(1.0, t);
      auto spop = [&](double tt) {
        VectorXd s(L);
        for (int l = 0; l < L; ++l) s(l) = weibull_survival(tt, lam(l), kappa);
        return population_survival(tt, theta, p, s);
      };
      const double fd = -(spop(t + h) - spop(t - h)) / (2.0 * h);
      const double f = std::exp(population_log_density(t, theta, p, lam, kappa));
      worst = std::max(worst, std::abs(f - fd) / std::max(1e-12, std::abs(fd)));
    }
    if (worst > 1e-5) ok = false;
    detail += "fd-rel-err=" + fmt(worst) + " ";
  }

  // Dirichlet normalization by quadrature (tol 1e-5)
  {
    double worst = 0.0;
    for (auto [a1, a2] : std::vector<std::pair<double, double>>{{1, 1}, {2, 3}, {0.5, 0.7}}) {
      VectorXd aa(2);
      aa << a1, a2;
      auto f = [&](double x) {
        VectorXd comp(2);
        comp << x, 1.0 - x;
        return std::exp(dirichlet_log_density(comp, aa));
      };
      worst = std::max(worst, std::abs(integrate_tanh_sinh_01(f) - 1.0));
    }
    if (worst > 1e-5) ok = false;
    detail += "dirichlet-quad-err=" + fmt(worst) + " ";
  }

  // full-conditional / likelihood-difference consistency (tol 1e-8)
  {
    auto ds = make_fixture(8, 2, 2, 2, 31);
    ModelSpec spec;
    spec.variant = Variant::Ber2;
    auto state = make_state(ds, 33, true);
    state.gamma[0](0) = 1;
    state.eta[0](0) = 1;
    double worst = 0.0;
    const double values[5] = {-1.0, -0.3, 0.0, 0.4, 1.2};
    auto probe = [&](auto&& lc, auto&& lik, auto&& prior) {
      const double b_lc = lc(values[0]);
      const double b_ref = lik(values[0]) + prior(values[0]);
      for (int k = 1; k < 5; ++k) {
        const double d_lc = lc(values[k]) - b_lc;
        const double d_ref = lik(values[k]) + prior(values[k]) - b_ref;
        worst = std::max(worst, std::abs(d_lc - d_ref));
      }
    };
    probe([&](double x) { return logcond_beta(0, 0, x, state, ds, spec); },
          [&](double x) {
            auto s = state;
            s.beta[0](0) = x;
            return log_likelihood(s, ds, spec);
          },
          [&](double x) { return -0.5 * x * x / state.tau2(0); });
    probe([&](double x) { return logcond_zeta(0, 0, x, state, ds, spec); },
          [&](double x) {
            auto s = state;
            s.zeta[0](0) = x;
            return log_likelihood(s, ds, spec);
          },
          [&](double x) { return -0.5 * x * x / state.w2(0); });
    probe([&](double x) { return logcond_xi0(x, state, ds, spec); },
          [&](double x) {
            auto s = state;
            s.xi0 = x;
            return log_likelihood(s, ds, spec);
          },
          [&](double x) { return -0.5 * x * x / state.v02; });
    if (worst > 1e-8) ok = false;
    detail += "logcond-err=" + fmt(worst) + " ";
  }

  // PTCM degeneration identity
  {
    VectorXd p(4), lam = VectorXd::Constant(4, 1.3);
    p << 0.1, 0.2, 0.3, 0.4;
    const double theta = 1.9, kappa = 2.2, t = 0.9;
    VectorXd s(4);
    for (int l = 0; l < 4; ++l) s(l) = weibull_survival(t, lam(l), kappa);
    const double spop = population_survival(t, theta, p, s);
    const double ptcm = std::exp(-theta * (1.0 - weibull_survival(t, 1.3, kappa)));
    if (std::abs(spop - ptcm) > 1e-14) ok = false;
    detail += "ptcm-err=" + fmt(std::abs(spop - ptcm)) + " ";
  }

  // cure-fraction asymptote (tol 1e-9)
  {
    VectorXd p(3), lam(3);
    p << 0.25, 0.4, 0.35;
    lam << 0.6, 1.1, 2.2;
    const double theta = 2.3, kappa = 1.8;
    VectorXd s(3);
    const double t = 1e6 * lam.maxCoeff();
    for (int l = 0; l < 3; ++l) s(l) = weibull_survival(t, lam(l), kappa);
    const double err = std::abs(population_survival(t, theta, p, s) - std::exp(-theta));
    if (err > 1e-9) ok = false;
    detail += "cure-asymptote-err=" + fmt(err);
  }

  report(5, ok, detail);
}

void criterion_6() {
  bool ok = true;
  std::string detail;

  // slice and ARMS: KS < 0.01 against exact CDFs at 50,000 draws
  {
    LogDensity normal{[](double x) { return -0.5 * x * x; }};
    Rng rng(61, 0);
    std::vector<double> s_draws, a_draws;
    double x = 0.0, y = 0.0;
    for (int i = 0; i < 50000; ++i) {
      x = slice_sample(normal, x, 1.0, 50, rng);
      s_draws.push_back(x);
      y = arms_sample(normal, {y - 2, y - 1, y, y + 1, y + 2}, y, rng);
      a_draws.push_back(y);
    }
    const double ks_slice = ks_statistic(s_draws, normal_cdf);
    const double ks_arms = ks_statistic(a_draws, normal_cdf);
    if (ks_slice >= 0.01 || ks_arms >= 0.01) ok = false;
    detail += "KS(slice)=" + fmt(ks_slice) + " KS(arms)=" + fmt(ks_arms) + " ";
  }

  // Geweke joint-distribution test: KS < 0.02 over 20,000 recorded cycles
  {
    GewekeModel model(117);
    RunConfig cfg;
    cfg.n_iterations = 1;
    cfg.n_warmup = 0;
    Rng rng(118, 0);
    const int recorded = 20000;
    const int thin = 30;  // the joint chain's autocorrelation time
    std::vector<double> kappa_chain, xi0_chain;
    auto state = model.prior_draw(rng);
    Fitter fitter(model.ds, model.spec, cfg);
    for (long c = 0; c < static_cast<long>(recorded) * thin; ++c) {
      model.resimulate(state, rng);
      fitter.set_state(state);
      fitter.sweep(rng);
      state = fitter.state();
      if ((c + 1) % thin != 0) continue;
      kappa_chain.push_back(state.kappa);
      xi0_chain.push_back(state.xi0);
    }
    Rng prior_rng(119, 0);
    std::vector<double> kappa_prior, xi0_prior;
    for (int c = 0; c < 3 * recorded; ++c) {
      auto s = model.prior_draw(prior_rng);
      kappa_prior.push_back(s.kappa);
      xi0_prior.push_back(s.xi0);
    }
    const double ks_kappa = ks_two_sample(kappa_chain, kappa_prior);
    const double ks_xi0 = ks_two_sample(xi0_chain, xi0_prior);
    if (ks_kappa >= 0.02 || ks_xi0 >= 0.02) ok = false;
    detail += "geweke KS(kappa)=" + fmt(ks_kappa) + " KS(xi0)=" + fmt(ks_xi0) + " ";
  }

  // indicator posterior matches the 2^4 enumeration oracle within +-0.03
  {
    auto ds = make_fixture(20, 1, 2, 2, 101);
    ModelSpec spec;
    spec.variant = Variant::Ber1;
    std::vector<Eigen::Index> ps{2, 2};
    auto base = ParameterState::zeros(1, ps);
    base.kappa = 1.5;
    base.xi0 = 0.3;
    base.tau2.setConstant(1.0);
    for (auto& piv : base.pi) piv.setConstant(0.5);  // uniform configuration prior

    // marginal likelihood of each configuration by Simpson quadrature over
    // the active coefficients
    const double tau = 1.0;
    const int grid_n = 41;
    const double lo = -6.0 * tau, hi = 6.0 * tau;
    const double h = (hi - lo) / (grid_n - 1);
    auto slab = [&](double b) {
      return std::exp(-0.5 * b * b / (tau * tau)) / (tau * std::sqrt(2.0 * M_PI));
    };
    auto simpson_w = [&](int i) {
      if (i == 0 || i == grid_n - 1) return 1.0;
      return i % 2 == 1 ? 4.0 : 2.0;
    };
    double logm[16];
    double mx = -1e308;
    for (int mask = 0; mask < 16; ++mask) {
      auto state = base;
      std::vector<std::pair<Eigen::Index, Eigen::Index>> active;  // (j, l)
      for (int bit = 0; bit < 4; ++bit) {
        const Eigen::Index l = bit / 2, j = bit % 2;
        state.gamma[static_cast<size_t>(l)](j) = (mask >> bit) & 1;
        state.beta[static_cast<size_t>(l)](j) = 0.0;
        if ((mask >> bit) & 1) active.emplace_back(j, l);
      }
      if (active.empty()) {
        logm[mask] = log_likelihood(state, ds, spec);
      } else {
        const size_t dims = active.size();
        std::vector<int> idx(dims, 0);
        double acc = 0.0;
        for (;;) {
          double w = 1.0;
          for (size_t d = 0; d < dims; ++d) {
            const double b = lo + idx[d] * h;
            state.beta[static_cast<size_t>(active[d].second)](active[d].first) = b;
            w *= simpson_w(idx[d]) * slab(b);
          }
          acc += w * std::exp(log_likelihood(state, ds, spec));
          size_t d = 0;
          for (; d < dims; ++d) {
            if (++idx[d] < grid_n) break;
            idx[d] = 0;
          }
          if (d == dims) break;
        }
        logm[mask] = std::log(acc) + static_cast<double>(dims) * std::log(h / 3.0);
      }
      mx = std::max(mx, logm[mask]);
    }
    double z = 0.0;
    for (int mask = 0; mask < 16; ++mask) z += std::exp(logm[mask] - mx);

    // chain over (gamma, beta)
    Rng rng(102, 0);
    auto state = base;
    long counts[16] = {0};
    const int iters = 60000;
    for (int it = 0; it < iters; ++it) {
      for (Eigen::Index l = 0; l < 2; ++l) {
        indicator_block_update(IndicatorKind::Gamma, l, state, ds, spec, rng);
        const auto sl = static_cast<size_t>(l);
        for (Eigen::Index j = 0; j < 2; ++j) {
          if (state.gamma[sl](j) != 1) continue;
          LogDensity ld{[&state, &ds, &spec, j, l](double xv) {
            return logcond_beta(j, l, xv, state, ds, spec);
          }};
          const double cur = state.beta[sl](j);
          state.beta[sl](j) =
              arms_sample(ld, {cur - 2 * tau, cur - tau, cur, cur + tau, cur + 2 * tau}, cur, rng);
        }
      }
      int mask = 0;
      for (int bit = 0; bit < 4; ++bit)
        if (state.gamma[static_cast<size_t>(bit / 2)](bit % 2) == 1) mask |= 1 << bit;
      ++counts[mask];
    }
    double worst = 0.0;
    for (int mask = 0; mask < 16; ++mask) {
      const double expect = std::exp(logm[mask] - mx) / z;
      const double freq = static_cast<double>(counts[mask]) / iters;
      worst = std::max(worst, std::abs(freq - expect));
    }
    if (worst > 0.03) ok = false;
    detail += "enumeration-err=" + fmt(worst);
  }

  report(6, ok, detail);
}

void criterion_7() {
  auto cfg = SimConfig::low_dim(kLowDimSeed);
  cfg.n = 120;
  auto [data, truth] = simulate_gptcm(cfg);

  ModelSpec spec;
  spec.variant = Variant::Ber2;
  RunConfig rc;
  rc.n_iterations = 1500;
  rc.n_warmup = 500;
  rc.n_chains = 2;
  rc.seed = 23;

  const fs::path base = fs::temp_directory_path() / "gptcm_acceptance_c7";
  fs::remove_all(base);
  fs::create_directories(base);
  auto run_and_store = [&](int threads, const fs::path& dir) {
    auto rc2 = rc;
    rc2.threads = threads;
    auto fit = run_fit(data, spec, rc2);
    io::write_chain_store(fit, data, dir);
    auto summary = summarize(fit);
    io::write_summary(summary, fit, dir / "summary");
  };
  run_and_store(1, base / "a");
  run_and_store(1, base / "b");
  run_and_store(2, base / "c");

  auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
  };
  bool ok = true;
  std::string detail = "byte-identical files:";
  for (const char* f :
       {"chain_scalars.csv", "chain_xi.csv", "chain_beta.csv", "chain_gamma.csv", "chain_zeta.csv",
        "chain_eta.csv", "chain_beta0.csv", "chain_zeta0.csv", "chain_tau2.csv", "chain_w2.csv",
        "summary/summary_scalars.csv", "summary/summary_coefficients.csv"}) {
    const auto a = slurp(base / "a" / f);
    const bool same = !a.empty() && a == slurp(base / "b" / f) && a == slurp(base / "c" / f);
    if (!same) {
      ok = false;
      detail += std::string(" ") + f + "=DIFF";
    }
  }
  if (ok) detail += " all (two runs and thread counts 1 vs 2)";
  fs::remove_all(base);
  report(7, ok, detail);
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<int> which;
  for (int i = 1; i < argc; ++i) which.push_back(std::atoi(argv[i]));
  if (which.empty()) which = {1, 2, 3, 4, 5, 6, 7};

  const bool run1 = std::count(which.begin(), which.end(), 1) > 0;
  const bool run2 = std::count(which.begin(), which.end(), 2) > 0;
  try {
    if (run1 || run2) criterion_1_and_2(run1, run2);
    for (int c : which) {
      switch (c) {
        case 1:
        case 2:
          break;  // handled above
        case 3:
          criterion_3();
          break;
        case 4:
          criterion_4();
          break;
        case 5:
          criterion_5();
          break;
        case 6:
          criterion_6();
          break;
        case 7:
          criterion_7();
          break;
        default:
          std::fprintf(stderr, "unknown criterion %d\n", c);
          return 2;
      }
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "acceptance suite error: %s\n", e.what());
    return 2;
  }
  return g_failures == 0 ? 0 : 1;
}
