#pragma once

#include <Eigen/Dense>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace gptcm {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using Eigen::VectorXi;

/// Thrown when inputs violate a documented precondition (bad data, bad
/// dimensions, out-of-domain arguments).
class domain_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Thrown when a caller violates an API contract (e.g. asking for the
/// conditional of a coefficient whose indicator is off).
class contract_error : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Right-censored survival data with cell-type covariate blocks and
/// observed cell-type compositions.
struct SurvivalDataset {
  VectorXd time;                        // observed times T*_i > 0
  VectorXi event;                       // censoring indicators, 0 or 1
  MatrixXd clinical;                    // n x d mandatory covariates
  std::vector<MatrixXd> cell_covariates;  // L blocks, each n x p_l
  MatrixXd proportions;                 // n x L observed compositions

  Eigen::Index n() const { return time.size(); }
  Eigen::Index d() const { return clinical.cols(); }
  Eigen::Index L() const { return static_cast<Eigen::Index>(cell_covariates.size()); }
  Eigen::Index p(Eigen::Index l) const { return cell_covariates[static_cast<size_t>(l)].cols(); }
  Eigen::Index total_p() const {
    Eigen::Index s = 0;
    for (const auto& x : cell_covariates) s += x.cols();
    return s;
  }

  /// Returns every violation found (not just the first). Empty = valid.
  std::vector<std::string> validation_errors() const;
  void validate() const;  // throws domain_error listing all violations
};

enum class Variant { noBVS1, noBVS2, Ber1, Ber2, MRF1, MRF2 };

std::string to_string(Variant v);
Variant variant_from_string(const std::string& name);

/// True for noBVS2/Ber2/MRF2: the Dirichlet measurement-error submodel with
/// its covariate regression is part of the likelihood.
inline bool has_measurement_error(Variant v) {
  return v == Variant::noBVS2 || v == Variant::Ber2 || v == Variant::MRF2;
}
/// True for Ber*/MRF*: spike-and-slab selection on the survival-side beta.
inline bool has_selection(Variant v) {
  return v != Variant::noBVS1 && v != Variant::noBVS2;
}
inline bool is_mrf(Variant v) { return v == Variant::MRF1 || v == Variant::MRF2; }
inline bool is_bernoulli(Variant v) { return v == Variant::Ber1 || v == Variant::Ber2; }

/// Fixed hyperparameters shared by all variants. Shapes/rates follow the
/// shape-rate convention for Gamma and the (shape, scale-numerator)
/// convention for inverse-Gamma (mean = b/(a-1)).
struct HyperParams {
  double a_kappa = 1.0, b_kappa = 1.0;
  double a_v = 5.0, b_v = 20.0, a_v0 = 5.0, b_v0 = 20.0;
  double a_tau = 5.0, b_tau = 20.0, a_tau0 = 5.0, b_tau0 = 20.0;
  double a_w = 5.0, b_w = 20.0, a_w0 = 5.0, b_w0 = 20.0;
  double a_pi = 1.0, b_pi = -1.0;    // b_pi < 0 means "use c * p_l"
  double a_rho = 1.0, b_rho = -1.0;  // same rule
  double c = 1.0;                    // Beta(1, c p) tuning scalar
  double s = 0.10;                   // target sparsity; MRF a = logit(s)

  double beta_b_pi(Eigen::Index p_l) const { return b_pi > 0 ? b_pi : c * static_cast<double>(p_l); }
  double beta_b_rho(Eigen::Index p_l) const { return b_rho > 0 ? b_rho : c * static_cast<double>(p_l); }

  std::vector<std::string> validation_errors() const;
};

/// Sparse symmetric weight matrix over the pL stacked indicators plus the
/// two Markov-random-field scalars.
struct MrfGraph {
  Eigen::Index dim = 0;  // = sum of p_l
  // undirected edges stored once (i < j); weights in [0, 1]
  std::vector<Eigen::Index> edge_i, edge_j;
  std::vector<double> weight;
  double a = 0.0;  // sparsity (logit of target inclusion probability)
  double b = 0.0;  // smoothing strength, >= 0

  void add_edge(Eigen::Index i, Eigen::Index j, double w);
  /// Neighbor accessor built on demand; call finalize() after adding edges.
  void finalize();
  const std::vector<std::pair<Eigen::Index, double>>& neighbors(Eigen::Index i) const;
  size_t n_edges() const { return weight.size(); }

  std::vector<std::string> validation_errors() const;

 private:
  std::vector<std::vector<std::pair<Eigen::Index, double>>> adj_;
};

/// Which of the six models to fit, with all fixed hyperparameters and the
/// optional MRF graphs.
struct ModelSpec {
  Variant variant = Variant::noBVS1;
  HyperParams hyper;
  std::optional<MrfGraph> graph_beta;   // G, a, b  (MRF variants)
  std::optional<MrfGraph> graph_zeta;   // G*, a*, b* (MRF2)

  std::vector<std::string> validation_errors(const SurvivalDataset& data) const;
  void validate(const SurvivalDataset& data) const;
};

/// One point in the full parameter space.
struct ParameterState {
  // cure fraction
  double xi0 = 0.0;
  VectorXd xi;       // length d
  double v2 = 1.0, v02 = 1.0;

  // Weibull shape
  double kappa = 1.0;

  // noncure fraction (survival side)
  VectorXd beta0;               // length L
  std::vector<VectorXd> beta;   // L vectors, length p_l
  std::vector<VectorXi> gamma;  // matching indicators
  VectorXd tau2;                // length L
  double tau02 = 1.0;

  // measurement-error side
  VectorXd zeta0;               // length L
  std::vector<VectorXd> zeta;   // L vectors, length p_l
  std::vector<VectorXi> eta;    // matching indicators
  VectorXd w2;                  // length L
  double w02 = 1.0;

  // Bernoulli-beta probabilities (Ber variants)
  std::vector<VectorXd> pi;   // per coefficient
  std::vector<VectorXd> rho;  // per coefficient

  Eigen::Index L() const { return beta0.size(); }

  /// Zero-initialized state with the right shapes; indicators all on.
  static ParameterState zeros(Eigen::Index d, const std::vector<Eigen::Index>& p_per_type);

  /// Checks shapes, positivity of variances/kappa, the Dirac spike
  /// constraint (indicator 0 forces coefficient 0) and pi/rho ranges.
  std::vector<std::string> validation_errors(const SurvivalDataset& data) const;
  void validate(const SurvivalDataset& data) const;

  /// Flattened coefficient vector in (j fastest, l slowest) order.
  VectorXd flatten_beta() const;
  VectorXd flatten_zeta() const;
  VectorXi flatten_gamma() const;
  VectorXi flatten_eta() const;
};

/// Per-subject quantities derived from a state: theta, mu/lambda/alpha per
/// cell type, the proportions entering S_pop and the Weibull survivals at
/// the observed times. Everything is kept in logs where overflow matters.
struct DerivedQuantities {
  double kappa = 1.0;  // copied from the state that produced this
  VectorXd log_theta;  // n
  VectorXd theta;      // n
  MatrixXd log_mu;      // n x L
  MatrixXd log_lambda;  // n x L
  MatrixXd wexp;        // n x L, (t_i / lambda_il)^kappa
  MatrixXd surv;        // n x L, exp(-wexp)
  MatrixXd log_alpha;   // n x L (measurement-error variants; else unused)
  MatrixXd alpha;       // n x L
  VectorXd log_alpha0;  // n, log sum_l alpha_il
  MatrixXd log_p;       // n x L, proportions entering S_pop (log)
  MatrixXd p;           // n x L
  VectorXd sum_ps;      // n, sum_l p_il surv_il
  long clamp_count = 0;  // exp-argument clamps at +/-500
};

/// exp with the argument clamped to +/-500; bumps the counter when clamping.
double clamped_exp(double x, long* clamp_count);

constexpr double kExpClamp = 500.0;

}  // namespace gptcm
