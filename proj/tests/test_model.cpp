#include "doctest.h"
#include "gptcm/model.hpp"
#include "test_helpers.hpp"

#include <cmath>

using namespace gptcm;
using namespace gptcm::test;

namespace {

ModelSpec spec_for(Variant v, const SurvivalDataset& ds) {
  ModelSpec spec;
  spec.variant = v;
  if (is_mrf(v)) {
    MrfGraph g;
    g.dim = ds.total_p();
    g.a = -1.5;
    g.b = 0.3;
    // ring of unit edges, just to exercise the quadratic form
    for (Eigen::Index i = 0; i + 1 < g.dim; ++i) g.add_edge(i, i + 1, 1.0);
    g.finalize();
    spec.graph_beta = g;
    if (v == Variant::MRF2) spec.graph_zeta = g;
  }
  return spec;
}

}  // namespace

TEST_CASE("weibull survival: closed-form values") {
  CHECK(weibull_survival(1.7, 1.7, 0.9) == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
  CHECK(weibull_survival(3.0, 3.0, 4.2) == doctest::Approx(0.36787944117144233).epsilon(1e-12));
  CHECK(weibull_survival(1e-12, 1.0, 2.0) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(weibull_survival(2.0, 1.0, 2.0) == doctest::Approx(0.018315638888734179).epsilon(1e-12));
  CHECK_THROWS_AS(weibull_survival(-1.0, 1.0, 1.0), domain_error);
  CHECK_THROWS_AS(weibull_survival(1.0, 0.0, 1.0), domain_error);
}

TEST_CASE("weibull scale from mean") {
  CHECK(weibull_scale_from_mean(std::tgamma(1.5), 2.0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(weibull_scale_from_mean(1.0, 1.0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(weibull_scale_from_mean(2.0, 2.0) == doctest::Approx(2.2567583341910251).epsilon(1e-12));
  CHECK_THROWS_AS(weibull_scale_from_mean(0.0, 1.0), domain_error);
  // mean identity: E[Weibull(lambda,kappa)] = lambda Gamma(1+1/kappa) = mu
  const double mu = 1.7, kappa = 2.6;
  const double lambda = weibull_scale_from_mean(mu, kappa);
  CHECK(lambda * std::tgamma(1.0 + 1.0 / kappa) == doctest::Approx(mu).epsilon(1e-12));
}

TEST_CASE("population survival: values, bounds, cure asymptote") {
  VectorXd p1(1), s1(1);
  p1 << 1.0;
  s1 << 0.5;
  CHECK(population_survival(1.0, 1.0, p1, s1) == doctest::Approx(0.60653065971263342).epsilon(1e-12));

  VectorXd p(3), s(3);
  p << 0.2, 0.3, 0.5;
  s << 1.0, 1.0, 1.0;
  CHECK(population_survival(0.5, 7.3, p, s) == doctest::Approx(1.0).epsilon(1e-12));

  // all S_l -> 0 leaves the cure fraction e^-theta
  VectorXd s0(3);
  s0 << 1e-14, 1e-14, 1e-14;
  CHECK(population_survival(2.0, 1.7, p, s0) == doctest::Approx(std::exp(-1.7)).epsilon(1e-9));

  VectorXd bad(3);
  bad << 0.2, 0.3, 0.4;
  CHECK_THROWS_AS(population_survival(1.0, 1.0, bad, s), domain_error);
}

TEST_CASE("population density matches -dS/dt and degenerates to PTCM") {
  VectorXd p(2), lam(2);
  p << 0.4, 0.6;
  lam << 1.0, 2.0;
  const double theta = 1.3, kappa = 2.0, t = 1.0, h = 1e-5;
  auto spop = [&](double tt) {
    VectorXd s(2);
    for (int l = 0; l < 2; ++l) s(l) = weibull_survival(tt, lam(l), kappa);
    return population_survival(tt, theta, p, s);
  };
  const double fd = -(spop(t + h) - spop(t - h)) / (2.0 * h);
  const double f = std::exp(population_log_density(t, theta, p, lam, kappa));
  CHECK(f == doctest::Approx(fd).epsilon(1e-6));

  // L=1: log f_pop = log(theta f_W(t) e^{-theta F_W(t)})
  VectorXd p1(1), lam1(1);
  p1 << 1.0;
  lam1 << 1.4;
  const double fw = kappa / lam1(0) * std::pow(t / lam1(0), kappa - 1.0) *
                    std::exp(-std::pow(t / lam1(0), kappa));
  const double Fw = 1.0 - weibull_survival(t, lam1(0), kappa);
  const double expect = std::log(theta * fw) - theta * Fw;
  CHECK(population_log_density(t, theta, p1, lam1, kappa) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("population density integrates to the noncured mass") {
  VectorXd p(2), lam(2);
  p << 0.35, 0.65;
  lam << 0.8, 2.5;
  const double theta = 1.6, kappa = 1.7;
  auto f = [&](double t) {
    if (t <= 0.0) return 0.0;
    return std::exp(population_log_density(t, theta, p, lam, kappa));
  };
  // upper limit where S_pop has converged to the cure plateau
  const double mass = integrate_simpson(f, 1e-9, 60.0, 1e-9);
  CHECK(mass == doctest::Approx(1.0 - std::exp(-theta)).epsilon(1e-6));
}

TEST_CASE("population density / survival derivative property on random draws") {
  Rng rng(42, 7);
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
    CHECK(f == doctest::Approx(fd).epsilon(1e-5));
  }
}

TEST_CASE("S_pop monotone with limits 1 and e^-theta") {
  VectorXd p(3), lam(3);
  p << 0.25, 0.4, 0.35;
  lam << 0.6, 1.1, 2.2;
  const double theta = 2.3, kappa = 1.8;
  auto spop = [&](double t) {
    VectorXd s(3);
    for (int l = 0; l < 3; ++l) s(l) = weibull_survival(t, lam(l), kappa);
    return population_survival(t, theta, p, s);
  };
  double prev = 1.0 + 1e-15;
  for (double t = 1e-6; t < 50.0; t *= 1.6) {
    const double cur = spop(t);
    CHECK(cur <= prev);
    prev = cur;
  }
  CHECK(spop(1e-9) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(spop(1e6 * lam.maxCoeff()) == doctest::Approx(std::exp(-theta)).epsilon(1e-9));
}

TEST_CASE("PTCM reduction when all cell types share one scale") {
  VectorXd p(4), lam = VectorXd::Constant(4, 1.3);
  p << 0.1, 0.2, 0.3, 0.4;
  const double theta = 1.9, kappa = 2.2, t = 0.9;
  VectorXd s(4);
  for (int l = 0; l < 4; ++l) s(l) = weibull_survival(t, lam(l), kappa);
  const double spop = population_survival(t, theta, p, s);
  const double ptcm = std::exp(-theta * (1.0 - weibull_survival(t, 1.3, kappa)));
  CHECK(spop == doctest::Approx(ptcm).epsilon(1e-14));
}

TEST_CASE("dirichlet log density: values and normalization") {
  VectorXd pt(2), a(2);
  pt << 0.37, 0.63;
  a << 1.0, 1.0;
  CHECK(dirichlet_log_density(pt, a) == doctest::Approx(0.0).epsilon(1e-12));
  pt << 0.5, 0.5;
  a << 2.0, 2.0;
  CHECK(dirichlet_log_density(pt, a) == doctest::Approx(0.4054651081081644).epsilon(1e-12));

  VectorXd boundary(2);
  boundary << 0.0, 1.0;
  CHECK_THROWS_AS(dirichlet_log_density(boundary, a), domain_error);

  for (auto [a1, a2] : std::vector<std::pair<double, double>>{{1.0, 1.0}, {2.0, 3.0}, {0.5, 0.7}}) {
    VectorXd aa(2);
    aa << a1, a2;
    auto f = [&](double x) {
      VectorXd comp(2);
      comp << x, 1.0 - x;
      return std::exp(dirichlet_log_density(comp, aa));
    };
    CHECK(integrate_tanh_sinh_01(f) == doctest::Approx(1.0).epsilon(1e-5));
  }
}

TEST_CASE("linear predictors: intercept-only, theta example, proportion normalization") {
  auto ds = make_fixture(6, 2, 3, 3, 11);
  auto spec = spec_for(Variant::noBVS2, ds);
  std::vector<Eigen::Index> ps{3, 3, 3};
  auto state = ParameterState::zeros(2, ps);
  state.kappa = 1.0;

  auto dq = linear_predictors(state, ds, spec);
  for (Eigen::Index i = 0; i < ds.n(); ++i) {
    CHECK(dq.theta(i) == doctest::Approx(1.0));
    for (Eigen::Index l = 0; l < 3; ++l) {
      CHECK(std::exp(dq.log_mu(i, l)) == doctest::Approx(1.0));
      CHECK(dq.alpha(i, l) == doctest::Approx(1.0));
      CHECK(dq.p(i, l) == doctest::Approx(1.0 / 3.0));
    }
  }

  // theta = exp(1 + 0.6 x1 - x2) at x = (1, 0.5)
  SurvivalDataset one = make_fixture(1, 2, 3, 3, 12);
  one.clinical(0, 0) = 1.0;
  one.clinical(0, 1) = 0.5;
  auto st2 = ParameterState::zeros(2, ps);
  st2.xi0 = 1.0;
  st2.xi << 0.6, -1.0;
  auto dq2 = linear_predictors(st2, one, spec_for(Variant::noBVS1, one));
  CHECK(dq2.theta(0) == doctest::Approx(3.0041660239464334).epsilon(1e-12));

  // alpha row (1,2,5) -> p = (0.125, 0.25, 0.625)
  auto st3 = ParameterState::zeros(2, ps);
  st3.zeta0 << std::log(1.0), std::log(2.0), std::log(5.0);
  auto dq3 = linear_predictors(st3, one, spec);
  CHECK(dq3.p(0, 0) == doctest::Approx(0.125).epsilon(1e-12));
  CHECK(dq3.p(0, 1) == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(dq3.p(0, 2) == doctest::Approx(0.625).epsilon(1e-12));

  // variant-1 models use the observed proportions verbatim
  auto dq4 = linear_predictors(st3, one, spec_for(Variant::Ber1, one));
  CHECK(dq4.p(0, 0) == doctest::Approx(one.proportions(0, 0)).epsilon(1e-15));

  // exp overflow is clamped and counted
  auto st5 = ParameterState::zeros(2, ps);
  st5.xi0 = 800.0;
  auto dq5 = linear_predictors(st5, one, spec);
  CHECK(dq5.clamp_count > 0);
  CHECK(std::isfinite(dq5.theta(0)));
}

TEST_CASE("log likelihood: censored subject, composition, permutation invariance") {
  auto ds = make_fixture(3, 2, 2, 2, 21);
  auto spec = spec_for(Variant::Ber2, ds);
  auto state = make_state(ds, 22, true);

  // single censored subject: equals log S_pop(t1)
  SurvivalDataset one = ds;
  one.time = ds.time.head(1);
  one.event = VectorXi::Zero(1);
  one.clinical = ds.clinical.topRows(1);
  one.proportions = ds.proportions.topRows(1);
  for (auto& x : one.cell_covariates) x = x.topRows(1);
  auto spec1 = spec_for(Variant::Ber1, one);  // no Dirichlet factor
  auto dq = linear_predictors(state, one, spec1);
  VectorXd props = dq.p.row(0);
  VectorXd surv = dq.surv.row(0);
  const double expect = std::log(population_survival(one.time(0), dq.theta(0), props, surv));
  CHECK(log_likelihood(state, one, spec1) == doctest::Approx(expect).epsilon(1e-12));

  // composition: total = sum over subjects of (survival term + dirichlet term)
  auto dq3 = linear_predictors(state, ds, spec);
  double manual = 0.0;
  for (Eigen::Index i = 0; i < 3; ++i) {
    VectorXd pr = dq3.p.row(i);
    VectorXd sv = dq3.surv.row(i);
    VectorXd lam(2);
    for (int l = 0; l < 2; ++l) lam(l) = std::exp(dq3.log_lambda(i, l));
    if (ds.event(i) == 1)
      manual += population_log_density(ds.time(i), dq3.theta(i), pr, lam, state.kappa);
    else
      manual += std::log(population_survival(ds.time(i), dq3.theta(i), pr, sv));
    VectorXd al = dq3.alpha.row(i);
    VectorXd pt = ds.proportions.row(i);
    manual += dirichlet_log_density(pt, al);
  }
  CHECK(log_likelihood(state, ds, spec) == doctest::Approx(manual).epsilon(1e-10));

  // permutation invariance
  SurvivalDataset perm = ds;
  std::vector<Eigen::Index> order{2, 0, 1};
  for (Eigen::Index i = 0; i < 3; ++i) {
    perm.time(i) = ds.time(order[i]);
    perm.event(i) = ds.event(order[i]);
    perm.clinical.row(i) = ds.clinical.row(order[i]);
    perm.proportions.row(i) = ds.proportions.row(order[i]);
    for (size_t l = 0; l < perm.cell_covariates.size(); ++l)
      perm.cell_covariates[l].row(i) = ds.cell_covariates[l].row(order[i]);
  }
  CHECK(log_likelihood(state, perm, spec) == doctest::Approx(log_likelihood(state, ds, spec)).epsilon(1e-12));
}

TEST_CASE("mrf log prior") {
  MrfGraph g;
  g.dim = 2;
  g.a = -2.0;
  g.b = 1.0;
  g.add_edge(0, 1, 1.0);
  g.finalize();
  VectorXi zero = VectorXi::Zero(2);
  CHECK(mrf_log_prior(zero, g) == doctest::Approx(0.0));
  VectorXi both = VectorXi::Ones(2);
  CHECK(mrf_log_prior(both, g) == doctest::Approx(-2.0));  // -4 + 2*1

  // b = 0 degenerates to independent Bernoulli log odds: check all pairs by
  // enumeration on pL = 8
  MrfGraph g8;
  g8.dim = 8;
  g8.a = -1.1;
  g8.b = 0.0;
  for (Eigen::Index i = 0; i + 1 < 8; ++i) g8.add_edge(i, i + 1, 0.7);
  g8.finalize();
  for (int mask1 = 0; mask1 < 256; ++mask1)
    for (int mask2 : {0, 17, 255}) {
      VectorXi g1(8), g2(8);
      for (int b = 0; b < 8; ++b) {
        g1(b) = (mask1 >> b) & 1;
        g2(b) = (mask2 >> b) & 1;
      }
      const double diff = mrf_log_prior(g1, g8) - mrf_log_prior(g2, g8);
      CHECK(diff == doctest::Approx(-1.1 * (g1.sum() - g2.sum())).epsilon(1e-12));
    }

  VectorXi wrong = VectorXi::Zero(3);
  CHECK_THROWS_AS(mrf_log_prior(wrong, g), domain_error);
}

TEST_CASE("full conditionals equal likelihood + prior differences") {
  auto ds = make_fixture(8, 2, 2, 2, 31);
  for (Variant v : {Variant::noBVS2, Variant::Ber2, Variant::MRF1}) {
    auto spec = spec_for(v, ds);
    auto state = make_state(ds, 33, has_selection(v));
    if (!has_selection(v))
      for (auto& gv : state.gamma) gv.setOnes();
    // ensure a fully active coordinate to probe
    state.gamma[0](0) = 1;
    state.eta[0](0) = 1;

    const double values[5] = {-1.0, -0.3, 0.0, 0.4, 1.2};
    auto check_logcond = [&](const std::function<double(double)>& lc,
                             const std::function<double(double)>& loglik_at,
                             const std::function<double(double)>& logprior_at) {
      const double base_lc = lc(values[0]);
      const double base_ref = loglik_at(values[0]) + logprior_at(values[0]);
      for (int k = 1; k < 5; ++k) {
        const double d_lc = lc(values[k]) - base_lc;
        const double d_ref = loglik_at(values[k]) + logprior_at(values[k]) - base_ref;
        CHECK(d_lc == doctest::Approx(d_ref).epsilon(1e-8));
      }
    };

    check_logcond([&](double x) { return logcond_beta(0, 0, x, state, ds, spec); },
                  [&](double x) {
                    auto s = state;
                    s.beta[0](0) = x;
                    return log_likelihood(s, ds, spec);
                  },
                  [&](double x) { return -0.5 * x * x / state.tau2(0); });
    check_logcond([&](double x) { return logcond_beta0(1, x, state, ds, spec); },
                  [&](double x) {
                    auto s = state;
                    s.beta0(1) = x;
                    return log_likelihood(s, ds, spec);
                  },
                  [&](double x) { return -0.5 * x * x / state.tau02; });
    check_logcond([&](double x) { return logcond_xi(0, x, state, ds, spec); },
                  [&](double x) {
                    auto s = state;
                    s.xi(0) = x;
                    return log_likelihood(s, ds, spec);
                  },
                  [&](double x) { return -0.5 * x * x / state.v2; });
    check_logcond([&](double x) { return logcond_xi0(x, state, ds, spec); },
                  [&](double x) {
                    auto s = state;
                    s.xi0 = x;
                    return log_likelihood(s, ds, spec);
                  },
                  [&](double x) { return -0.5 * x * x / state.v02; });
    if (has_measurement_error(v)) {
      check_logcond([&](double x) { return logcond_zeta(0, 0, x, state, ds, spec); },
                    [&](double x) {
                      auto s = state;
                      s.zeta[0](0) = x;
                      return log_likelihood(s, ds, spec);
                    },
                    [&](double x) { return -0.5 * x * x / state.w2(0); });
      check_logcond([&](double x) { return logcond_zeta0(1, x, state, ds, spec); },
                    [&](double x) {
                      auto s = state;
                      s.zeta0(1) = x;
                      return log_likelihood(s, ds, spec);
                    },
                    [&](double x) { return -0.5 * x * x / state.w02; });
    } else {
      CHECK_THROWS_AS(logcond_zeta(0, 0, 0.1, state, ds, spec), contract_error);
    }
    // kappa conditional, positive coordinate
    {
      const double kvals[5] = {0.5, 1.0, 1.5, 2.0, 5.0};
      const auto& h = spec.hyper;
      const double base_lc = logcond_kappa(kvals[0], state, ds, spec);
      auto ref = [&](double x) {
        auto s = state;
        s.kappa = x;
        return log_likelihood(s, ds, spec) + (h.a_kappa - 1.0) * std::log(x) - h.b_kappa * x;
      };
      const double base_ref = ref(kvals[0]);
      for (int k = 1; k < 5; ++k) {
        CHECK(std::isfinite(logcond_kappa(kvals[k], state, ds, spec)));
        CHECK(logcond_kappa(kvals[k], state, ds, spec) - base_lc ==
              doctest::Approx(ref(kvals[k]) - base_ref).epsilon(1e-8));
      }
    }
  }
}

TEST_CASE("logcond_beta reduction at zero coefficients") {
  // with every beta zero, the value at beta_jl = 0 is the likelihood at
  // mu_il = exp(beta0_l) plus a zero prior term
  auto ds = make_fixture(5, 1, 2, 2, 41);
  auto spec = spec_for(Variant::Ber1, ds);
  std::vector<Eigen::Index> ps{2, 2};
  auto state = ParameterState::zeros(1, ps);
  state.beta0 << 0.3, -0.2;
  state.kappa = 1.6;
  const double lc = logcond_beta(0, 0, 0.0, state, ds, spec);
  CHECK(lc == doctest::Approx(log_likelihood(state, ds, spec)).epsilon(1e-12));
  auto dq = linear_predictors(state, ds, spec);
  for (Eigen::Index i = 0; i < ds.n(); ++i)
    CHECK(std::exp(dq.log_mu(i, 0)) == doctest::Approx(std::exp(state.beta0(0))).epsilon(1e-12));
}

TEST_CASE("logcond contract violations") {
  auto ds = make_fixture(5, 1, 2, 2, 51);
  auto spec = spec_for(Variant::Ber2, ds);
  auto state = make_state(ds, 52, true);
  state.gamma[0](0) = 0;
  state.beta[0](0) = 0.0;
  CHECK_THROWS_AS(logcond_beta(0, 0, 0.5, state, ds, spec), contract_error);
  state.eta[1](1) = 0;
  state.zeta[1](1) = 0.0;
  CHECK_THROWS_AS(logcond_zeta(1, 1, 0.5, state, ds, spec), contract_error);
}

TEST_CASE("conjugate posteriors") {
  auto ds = make_fixture(4, 2, 4, 2, 61);
  std::vector<Eigen::Index> ps{4, 4};
  auto state = ParameterState::zeros(2, ps);
  HyperParams h;

  // two active coordinates with beta^2 = 0.25 each -> IGamma(6, 20.25)
  state.gamma[0] << 1, 1, 0, 0;
  state.beta[0] << 0.5, -0.5, 0.0, 0.0;
  auto cp = conjugate_posteriors(state, ds, h);
  CHECK(cp.tau2[0].shape == doctest::Approx(6.0));
  CHECK(cp.tau2[0].rate == doctest::Approx(20.25));

  // all gamma = 0 -> prior
  state.gamma[0].setZero();
  state.beta[0].setZero();
  cp = conjugate_posteriors(state, ds, h);
  CHECK(cp.tau2[0].shape == doctest::Approx(h.a_tau));
  CHECK(cp.tau2[0].rate == doctest::Approx(h.b_tau));

  // Beta(a_pi + gamma, b_pi + p - gamma) with b_pi = c p
  state.gamma[1] << 1, 0, 0, 0;
  cp = conjugate_posteriors(state, ds, h);
  CHECK(cp.pi[1][0].a == doctest::Approx(2.0));
  CHECK(cp.pi[1][0].b == doctest::Approx(h.c * 4.0 + 4.0 - 1.0));
  CHECK(cp.pi[1][1].a == doctest::Approx(1.0));
  CHECK(cp.pi[1][1].b == doctest::Approx(h.c * 4.0 + 4.0));

  // xi variance pools over d coefficients
  state.xi << 0.3, -0.4;
  state.xi0 = 0.2;
  cp = conjugate_posteriors(state, ds, h);
  CHECK(cp.v2.shape == doctest::Approx(h.a_v + 1.0));  // d = 2
  CHECK(cp.v2.rate == doctest::Approx(h.b_v + 0.5 * 0.25));
  CHECK(cp.v02.shape == doctest::Approx(h.a_v0 + 0.5));
  CHECK(cp.v02.rate == doctest::Approx(h.b_v0 + 0.5 * 0.04));
}

TEST_CASE("state validation rejects spike violations") {
  auto ds = make_fixture(4, 2, 3, 2, 71);
  auto state = make_state(ds, 72, true);
  state.validate(ds);
  state.gamma[0](0) = 0;
  state.beta[0](0) = 0.7;
  auto errs = state.validation_errors(ds);
  CHECK(!errs.empty());
  CHECK_THROWS_AS(state.validate(ds), domain_error);
}

TEST_CASE("dataset validation lists all problems") {
  auto ds = make_fixture(4, 1, 2, 2, 81);
  ds.time(1) = -0.5;
  ds.event(2) = 3;
  ds.proportions(0, 0) = 0.5;  // breaks the row sum
  auto errs = ds.validation_errors();
  CHECK(errs.size() >= 3);
}
