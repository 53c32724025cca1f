#include "gptcm/evaluation.hpp"

#include <algorithm>
#include <cmath>

#include "gptcm/model.hpp"

namespace gptcm {

namespace {

PosteriorSummary::Scalar summarize_values(std::vector<double> v) {
  PosteriorSummary::Scalar s;
  const double n = static_cast<double>(v.size());
  for (double x : v) s.mean += x;
  s.mean /= n;
  for (double x : v) s.sd += (x - s.mean) * (x - s.mean);
  s.sd = v.size() > 1 ? std::sqrt(s.sd / (n - 1.0)) : 0.0;
  std::sort(v.begin(), v.end());
  auto quantile = [&](double q) {
    const double pos = q * (n - 1.0);
    const size_t lo = static_cast<size_t>(pos);
    const size_t hi = std::min(lo + 1, v.size() - 1);
    const double w = pos - static_cast<double>(lo);
    return (1.0 - w) * v[lo] + w * v[hi];
  };
  s.q025 = quantile(0.025);
  s.q975 = quantile(0.975);
  return s;
}

}  // namespace

PosteriorSummary summarize(const FitResult& fit) {
  std::vector<const ParameterState*> draws;
  for (const auto& chain : fit.chains)
    for (const auto& d : chain.draws) draws.push_back(&d);
  if (draws.empty()) throw domain_error("summarize: the fit has no recorded draws");
  if (draws.size() < 100)
    throw domain_error("summarize: needs at least 100 recorded draws, got " +
                       std::to_string(draws.size()));

  PosteriorSummary out;
  out.n_draws = static_cast<long>(draws.size());
  out.has_selection = has_selection(fit.spec.variant);
  out.has_measurement_error = has_measurement_error(fit.spec.variant);
  for (const auto& chain : fit.chains) {
    out.clamp_count += chain.clamp_count;
    out.incident_count += chain.incident_count;
  }

  const auto& first = *draws.front();
  const Eigen::Index L = first.L();
  const Eigen::Index d = first.xi.size();

  auto collect = [&](const std::function<double(const ParameterState&)>& get) {
    std::vector<double> v;
    v.reserve(draws.size());
    for (const auto* s : draws) v.push_back(get(*s));
    return v;
  };
  out.scalars["xi0"] = summarize_values(collect([](const auto& s) { return s.xi0; }));
  out.scalars["kappa"] = summarize_values(collect([](const auto& s) { return s.kappa; }));
  out.scalars["v2"] = summarize_values(collect([](const auto& s) { return s.v2; }));
  out.scalars["v02"] = summarize_values(collect([](const auto& s) { return s.v02; }));
  out.scalars["tau02"] = summarize_values(collect([](const auto& s) { return s.tau02; }));
  for (Eigen::Index k = 0; k < d; ++k)
    out.scalars["xi_" + std::to_string(k + 1)] =
        summarize_values(collect([k](const auto& s) { return s.xi(k); }));
  for (Eigen::Index l = 0; l < L; ++l) {
    out.scalars["beta0_" + std::to_string(l + 1)] =
        summarize_values(collect([l](const auto& s) { return s.beta0(l); }));
    out.scalars["tau2_" + std::to_string(l + 1)] =
        summarize_values(collect([l](const auto& s) { return s.tau2(l); }));
  }
  if (out.has_measurement_error) {
    out.scalars["w02"] = summarize_values(collect([](const auto& s) { return s.w02; }));
    for (Eigen::Index l = 0; l < L; ++l) {
      out.scalars["zeta0_" + std::to_string(l + 1)] =
          summarize_values(collect([l](const auto& s) { return s.zeta0(l); }));
      out.scalars["w2_" + std::to_string(l + 1)] =
          summarize_values(collect([l](const auto& s) { return s.w2(l); }));
    }
  }

  Eigen::Index pL = 0;
  for (Eigen::Index l = 0; l < L; ++l) pL += first.beta[static_cast<size_t>(l)].size();
  out.beta_mean = VectorXd::Zero(pL);
  out.beta_sd = VectorXd::Zero(pL);
  out.beta_q025 = VectorXd::Zero(pL);
  out.beta_q975 = VectorXd::Zero(pL);
  out.zeta_mean = VectorXd::Zero(pL);
  out.zeta_sd = VectorXd::Zero(pL);
  out.zeta_q025 = VectorXd::Zero(pL);
  out.zeta_q975 = VectorXd::Zero(pL);
  out.mpip_gamma = VectorXd::Zero(pL);
  out.mpip_eta = VectorXd::Zero(pL);
  out.mpm_gamma = VectorXi::Zero(pL);
  out.mpm_eta = VectorXi::Zero(pL);
  out.beta_mpm = VectorXd::Zero(pL);
  out.zeta_mpm = VectorXd::Zero(pL);

  Eigen::Index flat = 0;
  std::vector<double> vals;
  vals.reserve(draws.size());
  for (Eigen::Index l = 0; l < L; ++l) {
    const auto sl = static_cast<size_t>(l);
    for (Eigen::Index j = 0; j < first.beta[sl].size(); ++j, ++flat) {
      double active = 0.0, active_sum = 0.0;
      vals.clear();
      for (const auto* s : draws) {
        const double b = s->beta[sl](j);
        vals.push_back(b);
        if (s->gamma[sl](j) == 1) {
          active += 1.0;
          active_sum += b;
        }
      }
      const auto sc = summarize_values(vals);
      out.beta_mean(flat) = sc.mean;
      out.beta_sd(flat) = sc.sd;
      out.beta_q025(flat) = sc.q025;
      out.beta_q975(flat) = sc.q975;
      out.mpip_gamma(flat) = active / static_cast<double>(draws.size());
      out.mpm_gamma(flat) = out.mpip_gamma(flat) >= 0.5 ? 1 : 0;
      const double cond_mean = active > 0.0 ? active_sum / active : 0.0;
      out.beta_mpm(flat) = out.has_selection ? (out.mpm_gamma(flat) == 1 ? cond_mean : 0.0) : sc.mean;

      double eactive = 0.0, eactive_sum = 0.0;
      vals.clear();
      for (const auto* s : draws) {
        const double z = s->zeta[sl](j);
        vals.push_back(z);
        if (s->eta[sl](j) == 1) {
          eactive += 1.0;
          eactive_sum += z;
        }
      }
      const auto sz = summarize_values(vals);
      out.zeta_mean(flat) = sz.mean;
      out.zeta_sd(flat) = sz.sd;
      out.zeta_q025(flat) = sz.q025;
      out.zeta_q975(flat) = sz.q975;
      out.mpip_eta(flat) = eactive / static_cast<double>(draws.size());
      out.mpm_eta(flat) = out.mpip_eta(flat) >= 0.5 ? 1 : 0;
      const double econd = eactive > 0.0 ? eactive_sum / eactive : 0.0;
      out.zeta_mpm(flat) = out.has_selection ? (out.mpm_eta(flat) == 1 ? econd : 0.0) : sz.mean;
    }
  }
  return out;
}

SelectionMetrics selection_metrics(const VectorXi& mask, const VectorXi& truth) {
  if (mask.size() != truth.size()) throw domain_error("selection_metrics: length mismatch");
  double tp = 0, tn = 0, fp = 0, fn = 0;
  for (Eigen::Index i = 0; i < mask.size(); ++i) {
    const bool m = mask(i) != 0;
    const bool t = truth(i) != 0;
    if (m && t) ++tp;
    else if (!m && !t) ++tn;
    else if (m && !t) ++fp;
    else ++fn;
  }
  SelectionMetrics out;
  out.accuracy = (tp + tn) / static_cast<double>(mask.size());
  if (tp + fn > 0) out.sensitivity = tp / (tp + fn);
  if (tn + fp > 0) out.specificity = tn / (tn + fp);
  return out;
}

double scaled_rmse(const VectorXd& estimate, const VectorXd& truth) {
  if (estimate.size() != truth.size()) throw domain_error("scaled_rmse: length mismatch");
  return (estimate - truth).norm() / std::sqrt(static_cast<double>(estimate.size()));
}

double StepFunction::operator()(double t) const {
  double v = 1.0;
  for (size_t k = 0; k < times.size(); ++k) {
    if (times[k] <= t)
      v = values[k];
    else
      break;
  }
  return v;
}

double StepFunction::left_limit(double t) const {
  double v = 1.0;
  for (size_t k = 0; k < times.size(); ++k) {
    if (times[k] < t)
      v = values[k];
    else
      break;
  }
  return v;
}

StepFunction kaplan_meier(const VectorXd& time, const VectorXi& event) {
  if (time.size() != event.size()) throw domain_error("kaplan_meier: length mismatch");
  std::vector<std::pair<double, int>> obs;
  obs.reserve(static_cast<size_t>(time.size()));
  for (Eigen::Index i = 0; i < time.size(); ++i) {
    if (!(time(i) > 0.0)) throw domain_error("kaplan_meier: times must be positive");
    obs.emplace_back(time(i), event(i));
  }
  std::sort(obs.begin(), obs.end());
  StepFunction s;
  double surv = 1.0;
  double at_risk = static_cast<double>(obs.size());
  size_t i = 0;
  while (i < obs.size()) {
    const double t = obs[i].first;
    double d = 0.0, removed = 0.0;
    while (i < obs.size() && obs[i].first == t) {
      if (obs[i].second == 1) d += 1.0;
      removed += 1.0;
      ++i;
    }
    if (d > 0.0) {
      surv *= 1.0 - d / at_risk;
      s.times.push_back(t);
      s.values.push_back(surv);
    }
    at_risk -= removed;
  }
  return s;
}

namespace {

// plug-in curve from point estimates
MatrixXd curve_from_estimates(const ModelSpec& spec, const SurvivalDataset& subjects,
                              const VectorXd& grid, double xi0, const VectorXd& xi, double kappa,
                              const VectorXd& beta0, const std::vector<VectorXd>& beta,
                              const VectorXd& zeta0, const std::vector<VectorXd>& zeta) {
  const Eigen::Index n = subjects.n(), L = subjects.L();
  const double lgam = std::lgamma(1.0 + 1.0 / kappa);
  MatrixXd out(n, grid.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    const double theta = std::exp(std::clamp(xi0 + subjects.clinical.row(i).dot(xi), -kExpClamp, kExpClamp));
    VectorXd lambdas(L), props(L);
    for (Eigen::Index l = 0; l < L; ++l) {
      const auto sl = static_cast<size_t>(l);
      const double log_mu = beta0(l) + subjects.cell_covariates[sl].row(i).dot(beta[sl]);
      lambdas(l) = std::exp(log_mu - lgam);
    }
    if (has_measurement_error(spec.variant)) {
      VectorXd la(L);
      for (Eigen::Index l = 0; l < L; ++l) {
        const auto sl = static_cast<size_t>(l);
        la(l) = zeta0(l) + subjects.cell_covariates[sl].row(i).dot(zeta[sl]);
      }
      const double m = la.maxCoeff();
      double acc = 0.0;
      for (Eigen::Index l = 0; l < L; ++l) acc += std::exp(la(l) - m);
      for (Eigen::Index l = 0; l < L; ++l) props(l) = std::exp(la(l) - m) / acc;
    } else {
      props = subjects.proportions.row(i);
    }
    for (Eigen::Index g = 0; g < grid.size(); ++g) {
      double mix = 0.0;
      for (Eigen::Index l = 0; l < L; ++l) {
        const double arg = kappa * (std::log(grid(g)) - std::log(lambdas(l)));
        mix += props(l) * std::exp(-std::exp(std::min(arg, kExpClamp)));
      }
      out(i, g) = std::exp(-theta * (1.0 - mix));
    }
  }
  return out;
}

}  // namespace

PredictionCurve predict_survival(const FitResult& fit, const SurvivalDataset& subjects,
                                 const VectorXd& grid, PredictMode mode) {
  subjects.validate();
  for (Eigen::Index g = 0; g < grid.size(); ++g)
    if (!(grid(g) > 0.0)) throw domain_error("prediction grid times must be positive");
  if (subjects.L() == 0 || subjects.cell_covariates.empty())
    throw domain_error("new subjects are missing covariate blocks");
  if (!has_measurement_error(fit.spec.variant) && subjects.proportions.size() == 0)
    throw domain_error("this variant requires observed proportions for prediction");

  PredictionCurve out;
  out.grid = grid;
  out.aggregation = mode;

  if (mode == PredictMode::DrawAverage) {
    MatrixXd acc = MatrixXd::Zero(subjects.n(), grid.size());
    long count = 0;
    for (const auto& chain : fit.chains)
      for (const auto& s : chain.draws) {
        acc += curve_from_estimates(fit.spec, subjects, grid, s.xi0, s.xi, s.kappa, s.beta0, s.beta,
                                    s.zeta0, s.zeta);
        ++count;
      }
    if (count == 0) throw domain_error("predict_survival: the fit has no draws");
    out.surv = acc / static_cast<double>(count);
    return out;
  }

  const auto summary = summarize(fit);
  const auto& first = fit.chains.front().draws.front();
  const Eigen::Index L = first.L();
  VectorXd xi(first.xi.size());
  for (Eigen::Index k = 0; k < xi.size(); ++k)
    xi(k) = summary.scalars.at("xi_" + std::to_string(k + 1)).mean;
  VectorXd beta0(L), zeta0 = VectorXd::Zero(L);
  for (Eigen::Index l = 0; l < L; ++l) beta0(l) = summary.scalars.at("beta0_" + std::to_string(l + 1)).mean;
  if (summary.has_measurement_error)
    for (Eigen::Index l = 0; l < L; ++l) zeta0(l) = summary.scalars.at("zeta0_" + std::to_string(l + 1)).mean;

  std::vector<VectorXd> beta, zeta;
  Eigen::Index flat = 0;
  for (Eigen::Index l = 0; l < L; ++l) {
    const auto sl = static_cast<size_t>(l);
    const Eigen::Index pl = first.beta[sl].size();
    VectorXd b(pl), z(pl);
    for (Eigen::Index j = 0; j < pl; ++j, ++flat) {
      if (mode == PredictMode::PlugInMPM) {
        b(j) = summary.beta_mpm(flat);
        z(j) = summary.zeta_mpm(flat);
      } else {
        b(j) = summary.beta_mean(flat);
        z(j) = summary.zeta_mean(flat);
      }
    }
    beta.push_back(b);
    zeta.push_back(z);
  }
  out.surv = curve_from_estimates(fit.spec, subjects, grid, summary.scalars.at("xi0").mean, xi,
                                  summary.scalars.at("kappa").mean, beta0, beta, zeta0, zeta);
  return out;
}

PredictionCurve curve_from_step(const StepFunction& s, Eigen::Index n_subjects, const VectorXd& grid) {
  PredictionCurve out;
  out.grid = grid;
  out.surv.resize(n_subjects, grid.size());
  for (Eigen::Index g = 0; g < grid.size(); ++g) out.surv.col(g).setConstant(s(grid(g)));
  return out;
}

BrierResult brier_score(const PredictionCurve& pred, const SurvivalDataset& validation) {
  const Eigen::Index n = validation.n();
  if (pred.surv.rows() != n) throw domain_error("brier_score: prediction rows != validation subjects");
  if (pred.surv.cols() != pred.grid.size()) throw domain_error("brier_score: grid/curve mismatch");

  // Kaplan-Meier estimate of the censoring distribution (events flipped)
  VectorXi censor_event(n);
  for (Eigen::Index i = 0; i < n; ++i) censor_event(i) = 1 - validation.event(i);
  const StepFunction G = kaplan_meier(validation.time, censor_event);
  const double t_max = validation.time.maxCoeff();

  BrierResult out;
  out.grid = pred.grid;
  out.score.resize(pred.grid.size());
  out.unreliable.assign(static_cast<size_t>(pred.grid.size()), false);
  for (Eigen::Index g = 0; g < pred.grid.size(); ++g) {
    const double t = pred.grid(g);
    out.unreliable[static_cast<size_t>(g)] = t > t_max;
    const double g_t = G(t);
    double acc = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double shat = pred.surv(i, g);
      if (validation.time(i) <= t && validation.event(i) == 1) {
        const double w = G.left_limit(validation.time(i));
        if (w > 0.0) acc += shat * shat / w;
      } else if (validation.time(i) > t) {
        if (g_t > 0.0) acc += (1.0 - shat) * (1.0 - shat) / g_t;
      }
    }
    out.score(g) = acc / static_cast<double>(n);
  }
  return out;
}

double BrierResult::integrated() const {
  double acc = 0.0;
  for (Eigen::Index g = 0; g + 1 < grid.size(); ++g)
    acc += 0.5 * (score(g) + score(g + 1)) * (grid(g + 1) - grid(g));
  return acc;
}

}  // namespace gptcm
