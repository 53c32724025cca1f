#pragma once

#include <map>
#include <optional>
#include <string>

#include "gptcm/mcmc.hpp"

namespace gptcm {

/// Monte Carlo posterior summaries of a fit.
struct PosteriorSummary {
  struct Scalar {
    double mean = 0.0, sd = 0.0, q025 = 0.0, q975 = 0.0;
  };
  std::map<std::string, Scalar> scalars;  // xi0, xi_k, kappa, intercepts, variances

  // flattened (j fastest, l slowest) coefficient summaries
  VectorXd beta_mean, beta_sd, beta_q025, beta_q975;
  VectorXd zeta_mean, zeta_sd, zeta_q025, zeta_q975;
  VectorXd mpip_gamma, mpip_eta;  // marginal posterior inclusion probabilities
  VectorXi mpm_gamma, mpm_eta;    // median probability model masks (mPIP >= 0.5)
  VectorXd beta_mpm, zeta_mpm;    // MPM coefficient estimates

  bool has_selection = false;
  bool has_measurement_error = false;
  long clamp_count = 0;
  long incident_count = 0;
  long n_draws = 0;
};

/// Requires at least 100 recorded draws across chains.
PosteriorSummary summarize(const FitResult& fit);

struct SelectionMetrics {
  std::optional<double> accuracy, sensitivity, specificity;
};

/// Confusion-matrix rates; degenerate truths leave the undefined rate absent.
SelectionMetrics selection_metrics(const VectorXi& mask, const VectorXi& truth);

/// ||estimate - truth||_2 / sqrt(len).
double scaled_rmse(const VectorXd& estimate, const VectorXd& truth);

/// Right-continuous step function starting at value 1.
struct StepFunction {
  std::vector<double> times;   // sorted jump locations
  std::vector<double> values;  // value on [times[k], times[k+1])
  double operator()(double t) const;
  double left_limit(double t) const;  // value just before t
};

/// Product-limit estimator.
StepFunction kaplan_meier(const VectorXd& time, const VectorXi& event);

enum class PredictMode { PlugInMPM, PlugInMean, DrawAverage };

struct PredictionCurve {
  VectorXd grid;   // evaluation times
  MatrixXd surv;   // n_subjects x grid
  PredictMode aggregation = PredictMode::PlugInMPM;
};

/// Population survival curves for new subjects from a fitted model.
/// PlugInMPM: MPM coefficients + posterior means elsewhere (selection
/// variants); PlugInMean: posterior means of everything (noBVS rule);
/// DrawAverage: pointwise average of per-draw curves.
PredictionCurve predict_survival(const FitResult& fit, const SurvivalDataset& subjects,
                                 const VectorXd& grid, PredictMode mode);

struct BrierResult {
  VectorXd grid;
  VectorXd score;
  std::vector<bool> unreliable;  // grid point beyond the last validation time
  double integrated() const;     // trapezoid over the whole grid
};

/// IPCW Brier score with Kaplan-Meier censoring weights estimated on the
/// validation set.
BrierResult brier_score(const PredictionCurve& pred, const SurvivalDataset& validation);

/// Reference curve: one survival function applied to every subject.
PredictionCurve curve_from_step(const StepFunction& s, Eigen::Index n_subjects, const VectorXd& grid);

}  // namespace gptcm
