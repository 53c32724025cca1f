#include "doctest.h"
#include "gptcm/evaluation.hpp"
#include "gptcm/mcmc.hpp"
#include "gptcm/model.hpp"
#include "gptcm/simulation.hpp"
#include "test_helpers.hpp"

#include <cmath>

using namespace gptcm;
using namespace gptcm::test;

namespace gptcm {
struct FitterTestAccess {
  static void corrupt_cached_loglik(Fitter& f) {
    f.loglik_total_ = std::numeric_limits<double>::quiet_NaN();
  }
  static void run_stage_guard(Fitter& f, const ParameterState& before) {
    f.stage_guard("test", before);
  }
};
}  // namespace gptcm

namespace {

ModelSpec ber2_spec() {
  ModelSpec spec;
  spec.variant = Variant::Ber2;
  return spec;
}

}  // namespace

TEST_CASE("recorded draw count formula") {
  auto ds = make_fixture(12, 1, 2, 2, 7);
  for (auto [iters, warmup, thin] : std::vector<std::array<long, 3>>{
           {10, 2, 1}, {10, 2, 3}, {25, 5, 4}, {7, 6, 1}, {100, 10, 7}}) {
    RunConfig cfg;
    cfg.n_iterations = iters;
    cfg.n_warmup = warmup;
    cfg.thin = thin;
    cfg.seed = 3;
    auto out = run_chain(ds, ber2_spec(), cfg, 0);
    CHECK(static_cast<long>(out.draws.size()) == (iters - warmup) / thin);
    CHECK(static_cast<long>(out.warmup_head.size()) == std::min<long>(warmup, 100));
  }
}

TEST_CASE("fixed seed gives bit-identical chains") {
  auto ds = make_fixture(15, 2, 3, 2, 17);
  RunConfig cfg;
  cfg.n_iterations = 60;
  cfg.n_warmup = 10;
  cfg.seed = 99;
  auto a = run_chain(ds, ber2_spec(), cfg, 1);
  auto b = run_chain(ds, ber2_spec(), cfg, 1);
  REQUIRE(a.draws.size() == b.draws.size());
  for (size_t t = 0; t < a.draws.size(); ++t) {
    CHECK(a.draws[t].xi0 == b.draws[t].xi0);
    CHECK(a.draws[t].kappa == b.draws[t].kappa);
    CHECK(a.draws[t].flatten_beta() == b.draws[t].flatten_beta());
    CHECK(a.draws[t].flatten_zeta() == b.draws[t].flatten_zeta());
    CHECK(a.loglik[t] == b.loglik[t]);
  }
  // different chain ids draw from different substreams
  auto c = run_chain(ds, ber2_spec(), cfg, 2);
  CHECK(a.draws.back().xi0 != c.draws.back().xi0);
  // identical chains make split-Rhat undefined (flagged as NaN)
  auto x = extract_scalar(a, "kappa");
  CHECK(std::isnan(split_rhat({x, x})));
}

TEST_CASE("sweep trace matches the algorithm block order (MRF2)") {
  auto ds = make_fixture(12, 2, 2, 2, 27);
  ModelSpec spec;
  spec.variant = Variant::MRF2;
  MrfGraph g;
  g.dim = 4;
  g.a = -1.0;
  g.b = 0.2;
  g.add_edge(0, 2, 0.5);
  spec.graph_beta = g;
  spec.graph_zeta = g;

  RunConfig cfg;
  cfg.n_iterations = 2;
  cfg.n_warmup = 1;
  cfg.trace_blocks = true;
  cfg.seed = 5;
  auto out = run_chain(ds, spec, cfg, 0);

  REQUIRE(out.trace.size() >= 2 * 20);
  size_t k = 0;
  auto expect = [&](const std::string& want) {
    REQUIRE(k < out.trace.size());
    CHECK(out.trace[k] == want);
    ++k;
  };
  auto expect_prefix = [&](const std::string& want) {
    REQUIRE(k < out.trace.size());
    CHECK(out.trace[k].rfind(want, 0) == 0);
    ++k;
  };
  for (int iter = 0; iter < 2; ++iter) {
    expect("gibbs_v02");
    expect("gibbs_v2");
    expect("slice_xi0");
    expect("slice_xi_1");
    expect("slice_xi_2");
    expect("refresh_theta");
    expect_prefix("choose_eta_block_");
    expect("mh_eta");
    expect("gibbs_w2_l");
    expect("gibbs_w02");
    expect("arms_zeta_active");
    expect("arms_zeta0");
    expect("arms_zeta_all");
    expect("refresh_p");
    expect("slice_kappa");
    expect("refresh_weibull");
    expect_prefix("choose_gamma_block_");
    expect("mh_gamma");
    expect("gibbs_tau2_l");
    expect("gibbs_tau02");
    expect("arms_beta_active");
    expect("arms_beta0");
    expect("arms_beta_all");
    expect("refresh_mu_weibull");
  }
  CHECK(k == out.trace.size());
}

TEST_CASE("all six variants run and produce valid states") {
  auto ds = make_fixture(20, 2, 3, 2, 37);
  for (Variant v : {Variant::noBVS1, Variant::noBVS2, Variant::Ber1, Variant::Ber2, Variant::MRF1,
                    Variant::MRF2}) {
    ModelSpec spec;
    spec.variant = v;
    if (is_mrf(v)) {
      MrfGraph g;
      g.dim = 6;
      g.a = -1.5;
      g.b = 0.1;
      g.add_edge(0, 3, 1.0);
      spec.graph_beta = g;
      if (v == Variant::MRF2) spec.graph_zeta = g;
    }
    RunConfig cfg;
    cfg.n_iterations = 40;
    cfg.n_warmup = 10;
    cfg.seed = 11;
    cfg.debug_checks = true;  // cached likelihood must match the full recompute
    auto out = run_chain(ds, spec, cfg, 0);
    CHECK(out.draws.size() == 30);
    for (const auto& s : out.draws) s.validate(ds);
    if (!has_selection(v)) {
      for (const auto& s : out.draws) {
        CHECK(s.flatten_gamma().minCoeff() == 1);
        CHECK(s.flatten_eta().minCoeff() == 1);
      }
    }
    if (!has_measurement_error(v)) {
      for (const auto& s : out.draws) CHECK(s.flatten_zeta().cwiseAbs().maxCoeff() == 0.0);
    }
  }
}

TEST_CASE("prior-only run recovers the kappa prior and converges across chains") {
  auto ds = make_fixture(25, 2, 2, 2, 47);
  RunConfig cfg;
  cfg.n_iterations = 6000;
  cfg.n_warmup = 500;
  cfg.n_chains = 4;
  cfg.prior_only = true;
  cfg.seed = 21;
  auto fit = run_fit(ds, ber2_spec(), cfg);
  REQUIRE(fit.converged);

  std::vector<double> kappa;
  for (const auto& ch : fit.chains)
    for (const auto& s : ch.draws) kappa.push_back(s.kappa);
  // Gamma(1,1): mean 1, var 1; 3 Monte Carlo standard errors with a generous
  // effective-sample deflation for autocorrelation
  const double n_eff = static_cast<double>(kappa.size()) / 10.0;
  CHECK(std::abs(mean_of(kappa) - 1.0) < 3.0 / std::sqrt(n_eff));
  CHECK(std::abs(var_of(kappa) - 1.0) < 10.0 / std::sqrt(n_eff));
  CHECK(fit.rhat.at("kappa") < 1.01);
  CHECK(fit.ess.at("kappa") > 100.0);

  // prior recovery for a conjugate block too: tau02 ~ IGamma(5,20), mean 5
  std::vector<double> tau02;
  for (const auto& ch : fit.chains)
    for (const auto& s : ch.draws) tau02.push_back(s.tau02);
  CHECK(std::abs(mean_of(tau02) - 5.0) < 0.5);
}

TEST_CASE("multi-chain fit is independent of the thread count") {
  auto ds = make_fixture(18, 1, 2, 2, 57);
  RunConfig base;
  base.n_iterations = 80;
  base.n_warmup = 20;
  base.n_chains = 3;
  base.seed = 77;
  base.threads = 1;
  auto fit1 = run_fit(ds, ber2_spec(), base);
  base.threads = 3;
  auto fit3 = run_fit(ds, ber2_spec(), base);
  REQUIRE(fit1.chains.size() == fit3.chains.size());
  for (size_t c = 0; c < fit1.chains.size(); ++c) {
    REQUIRE(fit1.chains[c].draws.size() == fit3.chains[c].draws.size());
    for (size_t t = 0; t < fit1.chains[c].draws.size(); ++t) {
      CHECK(fit1.chains[c].draws[t].flatten_beta() == fit3.chains[c].draws[t].flatten_beta());
      CHECK(fit1.chains[c].loglik[t] == fit3.chains[c].loglik[t]);
    }
  }
  for (const auto& [name, v] : fit1.rhat) {
    const double other = fit3.rhat.at(name);
    CHECK(((std::isnan(v) && std::isnan(other)) || v == other));
  }
}

TEST_CASE("pointwise log likelihood export sums to the total") {
  auto ds = make_fixture(14, 1, 2, 2, 67);
  RunConfig cfg;
  cfg.n_iterations = 30;
  cfg.n_warmup = 10;
  cfg.record_pointwise = true;
  cfg.seed = 31;
  auto out = run_chain(ds, ber2_spec(), cfg, 0);
  REQUIRE(out.pointwise_loglik.cols() == 20);
  for (size_t t = 0; t < out.draws.size(); ++t) {
    CHECK(out.pointwise_loglik.col(static_cast<Eigen::Index>(t)).sum() ==
          doctest::Approx(out.loglik[t]).epsilon(1e-10));
    const double full = log_likelihood(out.draws[t], ds, ber2_spec());
    CHECK(full == doctest::Approx(out.loglik[t]).epsilon(1e-9));
  }
}

TEST_CASE("incident machinery: revert, count, fail loudly past the limit") {
  auto ds = make_fixture(10, 1, 2, 2, 87);
  RunConfig cfg;
  cfg.n_iterations = 20;
  cfg.n_warmup = 5;
  cfg.seed = 41;
  Fitter fitter(ds, ber2_spec(), cfg);
  auto state = make_state(ds, 88, true);
  fitter.set_state(state);
  const double good = fitter.loglik();

  FitterTestAccess::corrupt_cached_loglik(fitter);
  FitterTestAccess::run_stage_guard(fitter, state);
  CHECK(fitter.incident_count() == 1);
  CHECK(fitter.loglik() == doctest::Approx(good).epsilon(1e-12));  // reverted and rebuilt

  CHECK_THROWS_AS(
      [&] {
        for (int i = 0; i < 200; ++i) {
          FitterTestAccess::corrupt_cached_loglik(fitter);
          FitterTestAccess::run_stage_guard(fitter, state);
        }
      }(),
      fit_error);
}

TEST_CASE("a failing chain flags the whole fit as non-converged") {
  auto ds = make_fixture(10, 1, 2, 2, 89);
  ModelSpec bad;
  bad.variant = Variant::MRF1;  // requires a graph; the chain constructor throws
  RunConfig cfg;
  cfg.n_iterations = 10;
  cfg.n_warmup = 2;
  cfg.n_chains = 2;
  auto fit = run_fit(ds, bad, cfg);
  CHECK(!fit.converged);
  CHECK(!fit.failure.empty());
  CHECK(fit.total_draws() == 0);
}

TEST_CASE("rhat and ess behave on synthetic chains") {
  Rng rng(97, 0);
  std::vector<std::vector<double>> chains(4);
  for (auto& c : chains)
    for (int i = 0; i < 2000; ++i) c.push_back(rng.normal());
  const double rhat = split_rhat(chains);
  CHECK(rhat < 1.01);
  CHECK(rhat > 0.99);
  const double ess = effective_sample_size(chains);
  CHECK(ess > 4000.0);

  // a shifted chain inflates Rhat
  for (auto& x : chains[0]) x += 5.0;
  CHECK(split_rhat(chains) > 1.5);
}

// Geweke-style successive-conditional test: alternating data resimulation
// and one MCMC sweep must keep the parameters distributed by their priors.
#include "geweke_helpers.hpp"

TEST_CASE("joint-distribution validity (successive-conditional sampler)") {
  GewekeModel model(117);
  RunConfig cfg;
  cfg.n_iterations = 1;
  cfg.n_warmup = 0;
  Rng rng(118, 0);

  // the joint (state, data) chain has an autocorrelation time near 30
  // sweeps on this model; this is a thinned smoke version of the full
  // acceptance-suite run
  const int recorded = 3000;
  const int thin = 10;
  std::vector<double> kappa_chain, xi0_chain, tau2_chain;
  double gamma_mean = 0.0;
  auto state = model.prior_draw(rng);
  Fitter fitter(model.ds, model.spec, cfg);
  for (int c = 0; c < recorded * thin; ++c) {
    model.resimulate(state, rng);
    fitter.set_state(state);  // rebinds the mutated data through the caches
    fitter.sweep(rng);
    state = fitter.state();
    if ((c + 1) % thin != 0) continue;
    kappa_chain.push_back(state.kappa);
    xi0_chain.push_back(state.xi0);
    tau2_chain.push_back(state.tau2(0));
    gamma_mean += static_cast<double>(state.flatten_gamma().sum()) / 4.0;
  }
  gamma_mean /= recorded;

  Rng prior_rng(119, 0);
  std::vector<double> kappa_prior, xi0_prior, tau2_prior;
  for (int c = 0; c < 3 * recorded; ++c) {
    auto s = model.prior_draw(prior_rng);
    kappa_prior.push_back(s.kappa);
    xi0_prior.push_back(s.xi0);
    tau2_prior.push_back(s.tau2(0));
  }

  CHECK(ks_two_sample(kappa_chain, kappa_prior) < 0.065);
  CHECK(ks_two_sample(xi0_chain, xi0_prior) < 0.065);
  CHECK(ks_two_sample(tau2_chain, tau2_prior) < 0.065);
  CHECK(std::abs(mean_of(kappa_chain) - 1.0) < 0.12);
  // activation frequency matches the effective prior mean a/(a+b+p-1)
  CHECK(std::abs(gamma_mean - 0.25) < 0.03);
}
