#pragma once

#include <functional>
#include <limits>

#include "gptcm/rng.hpp"
#include "gptcm/types.hpp"

namespace gptcm {

/// A univariate log density known up to an additive constant, with its
/// support. Log-concavity is only assumed (and only softly, thanks to the
/// Metropolis correction) by the ARMS sampler.
struct LogDensity {
  std::function<double(double)> logf;
  double lower = -std::numeric_limits<double>::infinity();
  double upper = std::numeric_limits<double>::infinity();

  double operator()(double x) const {
    if (x <= lower || x >= upper) return -std::numeric_limits<double>::infinity();
    return logf(x);
  }
};

/// Per-block sampler counters.
struct SamplerDiagnostics {
  long proposals = 0;
  long acceptances = 0;
  long slice_expansions = 0;
  long slice_shrinks = 0;
  long arms_rebuilds = 0;   // envelope refinements within calls
  long clamp_events = 0;

  SamplerDiagnostics& operator+=(const SamplerDiagnostics& o) {
    proposals += o.proposals;
    acceptances += o.acceptances;
    slice_expansions += o.slice_expansions;
    slice_shrinks += o.slice_shrinks;
    arms_rebuilds += o.arms_rebuilds;
    clamp_events += o.clamp_events;
    return *this;
  }
};

/// One draw of Neal's stepping-out + shrinkage slice sampler started at x0.
/// ld(x0) must be finite. When max_steps expansions are exhausted the
/// current bracket is used as-is (shrinkage still leaves the target
/// invariant).
double slice_sample(const LogDensity& ld, double x0, double width, int max_steps, Rng& rng,
                    SamplerDiagnostics* diag = nullptr);

/// One draw of adaptive rejection Metropolis sampling from the current
/// point x0. The envelope is a derivative-free piecewise-linear upper hull
/// over the initial abscissae (rebuilt fresh every call, refined within the
/// call); a final Metropolis step makes the draw correct even when the
/// target is not exactly log-concave.
double arms_sample(const LogDensity& ld, const std::vector<double>& init_abscissae, double x0, Rng& rng,
                   SamplerDiagnostics* diag = nullptr);

// --- exact draws from named distributions ----------------------------------

double draw_gamma(double shape, double rate, Rng& rng);           // mean shape/rate
double gibbs_draw_invgamma(double shape, double rate, Rng& rng);  // mean rate/(shape-1)
double gibbs_draw_beta(double a, double b, Rng& rng);
VectorXd draw_dirichlet(const VectorXd& alpha, Rng& rng);

/// One Metropolis-Hastings move on the indicators of cell-type block l:
/// flips one uniformly chosen coordinate; a 0->1 flip proposes the
/// coefficient from its slab prior, a 1->0 flip zeroes it. Applies to the
/// survival side (gamma/beta, kind = Gamma) or the measurement-error side
/// (eta/zeta, kind = Eta). Mutates state on acceptance and returns the flag.
enum class IndicatorKind { Gamma, Eta };
bool indicator_block_update(IndicatorKind kind, Eigen::Index l, ParameterState& state,
                            const SurvivalDataset& data, const ModelSpec& spec, Rng& rng,
                            SamplerDiagnostics* diag = nullptr);

}  // namespace gptcm
