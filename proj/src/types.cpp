#include "gptcm/types.hpp"

#include <cmath>
#include <sstream>

namespace gptcm {

namespace {

void join_throw(const std::vector<std::string>& errs, const char* what) {
  if (errs.empty()) return;
  std::ostringstream os;
  os << what << " (" << errs.size() << " problem" << (errs.size() > 1 ? "s" : "") << "):";
  for (const auto& e : errs) os << "\n  - " << e;
  throw domain_error(os.str());
}

}  // namespace

double clamped_exp(double x, long* clamp_count) {
  if (x > kExpClamp) {
    if (clamp_count) ++*clamp_count;
    x = kExpClamp;
  } else if (x < -kExpClamp) {
    if (clamp_count) ++*clamp_count;
    x = -kExpClamp;
  }
  return std::exp(x);
}

std::vector<std::string> SurvivalDataset::validation_errors() const {
  std::vector<std::string> errs;
  const Eigen::Index nn = n();
  if (nn == 0) errs.push_back("dataset is empty");
  if (event.size() != nn)
    errs.push_back("event has " + std::to_string(event.size()) + " rows, time has " + std::to_string(nn));
  if (clinical.rows() != nn)
    errs.push_back("clinical has " + std::to_string(clinical.rows()) + " rows, expected " + std::to_string(nn));
  if (cell_covariates.empty()) errs.push_back("no cell-type covariate blocks");
  for (size_t l = 0; l < cell_covariates.size(); ++l) {
    if (cell_covariates[l].rows() != nn)
      errs.push_back("cell-type block X" + std::to_string(l + 1) + " has " +
                     std::to_string(cell_covariates[l].rows()) + " rows, expected " + std::to_string(nn));
    if (!cell_covariates[l].allFinite())
      errs.push_back("cell-type block X" + std::to_string(l + 1) + " contains NaN or Inf");
  }
  if (proportions.rows() != nn)
    errs.push_back("proportions has " + std::to_string(proportions.rows()) + " rows, expected " + std::to_string(nn));
  if (proportions.cols() != L())
    errs.push_back("proportions has " + std::to_string(proportions.cols()) + " columns, expected L=" +
                   std::to_string(L()));

  for (Eigen::Index i = 0; i < nn; ++i) {
    if (!(time(i) > 0.0) || !std::isfinite(time(i)))
      errs.push_back("time[" + std::to_string(i) + "] = " + std::to_string(time(i)) + " is not strictly positive");
    if (event(i) != 0 && event(i) != 1)
      errs.push_back("event[" + std::to_string(i) + "] = " + std::to_string(event(i)) + " is not 0/1");
  }
  if (!clinical.allFinite()) errs.push_back("clinical contains NaN or Inf");
  if (proportions.rows() == nn && proportions.cols() == L()) {
    for (Eigen::Index i = 0; i < nn; ++i) {
      double row_sum = 0.0;
      bool interior = true;
      for (Eigen::Index l = 0; l < proportions.cols(); ++l) {
        const double v = proportions(i, l);
        row_sum += v;
        if (!(v > 0.0 && v < 1.0)) interior = false;
      }
      if (!interior)
        errs.push_back("proportions row " + std::to_string(i) + " has entries outside (0,1)");
      if (std::abs(row_sum - 1.0) > 1e-8)
        errs.push_back("proportions row " + std::to_string(i) + " sums to " + std::to_string(row_sum) +
                       ", not 1 within 1e-8");
    }
  }
  return errs;
}

void SurvivalDataset::validate() const { join_throw(validation_errors(), "invalid dataset"); }

std::string to_string(Variant v) {
  switch (v) {
    case Variant::noBVS1: return "noBVS1";
    case Variant::noBVS2: return "noBVS2";
    case Variant::Ber1: return "Ber1";
    case Variant::Ber2: return "Ber2";
    case Variant::MRF1: return "MRF1";
    case Variant::MRF2: return "MRF2";
  }
  return "?";
}

Variant variant_from_string(const std::string& name) {
  std::string s;
  for (char c : name) s += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (s == "nobvs1") return Variant::noBVS1;
  if (s == "nobvs2") return Variant::noBVS2;
  if (s == "ber1") return Variant::Ber1;
  if (s == "ber2") return Variant::Ber2;
  if (s == "mrf1") return Variant::MRF1;
  if (s == "mrf2") return Variant::MRF2;
  throw domain_error("unknown variant '" + name + "' (expected noBVS1|noBVS2|Ber1|Ber2|MRF1|MRF2)");
}

std::vector<std::string> HyperParams::validation_errors() const {
  std::vector<std::string> errs;
  auto pos = [&errs](double v, const char* name) {
    if (!(v > 0.0)) errs.push_back(std::string(name) + " must be > 0");
  };
  pos(a_kappa, "a_kappa"); pos(b_kappa, "b_kappa");
  pos(a_v, "a_v"); pos(b_v, "b_v"); pos(a_v0, "a_v0"); pos(b_v0, "b_v0");
  pos(a_tau, "a_tau"); pos(b_tau, "b_tau"); pos(a_tau0, "a_tau0"); pos(b_tau0, "b_tau0");
  pos(a_w, "a_w"); pos(b_w, "b_w"); pos(a_w0, "a_w0"); pos(b_w0, "b_w0");
  pos(a_pi, "a_pi"); pos(a_rho, "a_rho");
  pos(c, "c");
  if (!(s > 0.0 && s < 1.0)) errs.push_back("s must be in (0,1)");
  return errs;
}

void MrfGraph::add_edge(Eigen::Index i, Eigen::Index j, double w) {
  if (i == j) throw domain_error("MRF graph: self edge at " + std::to_string(i));
  if (i > j) std::swap(i, j);
  edge_i.push_back(i);
  edge_j.push_back(j);
  weight.push_back(w);
}

void MrfGraph::finalize() {
  adj_.assign(static_cast<size_t>(dim), {});
  for (size_t k = 0; k < weight.size(); ++k) {
    adj_[static_cast<size_t>(edge_i[k])].emplace_back(edge_j[k], weight[k]);
    adj_[static_cast<size_t>(edge_j[k])].emplace_back(edge_i[k], weight[k]);
  }
}

const std::vector<std::pair<Eigen::Index, double>>& MrfGraph::neighbors(Eigen::Index i) const {
  if (adj_.empty()) throw contract_error("MrfGraph::finalize() was not called");
  return adj_[static_cast<size_t>(i)];
}

std::vector<std::string> MrfGraph::validation_errors() const {
  std::vector<std::string> errs;
  if (dim <= 0) errs.push_back("MRF graph dimension must be positive");
  if (b < 0.0) errs.push_back("MRF b must be >= 0");
  for (size_t k = 0; k < weight.size(); ++k) {
    if (edge_i[k] < 0 || edge_j[k] >= dim) errs.push_back("MRF edge " + std::to_string(k) + " out of range");
    if (!(weight[k] >= 0.0 && weight[k] <= 1.0))
      errs.push_back("MRF edge " + std::to_string(k) + " weight outside [0,1]");
  }
  return errs;
}

std::vector<std::string> ModelSpec::validation_errors(const SurvivalDataset& data) const {
  std::vector<std::string> errs = hyper.validation_errors();
  const Eigen::Index pL = data.total_p();
  if (is_mrf(variant)) {
    if (!graph_beta) errs.push_back(to_string(variant) + " requires graph_beta");
    if (variant == Variant::MRF2 && !graph_zeta) errs.push_back("MRF2 requires graph_zeta");
    if (graph_beta) {
      auto ge = graph_beta->validation_errors();
      errs.insert(errs.end(), ge.begin(), ge.end());
      if (graph_beta->dim != pL)
        errs.push_back("graph_beta dimension " + std::to_string(graph_beta->dim) + " != pL = " + std::to_string(pL));
    }
    if (graph_zeta) {
      auto ge = graph_zeta->validation_errors();
      errs.insert(errs.end(), ge.begin(), ge.end());
      if (graph_zeta->dim != pL)
        errs.push_back("graph_zeta dimension " + std::to_string(graph_zeta->dim) + " != pL = " + std::to_string(pL));
    }
    if (variant == Variant::MRF1 && graph_zeta) errs.push_back("MRF1 must not carry graph_zeta");
  } else {
    if (graph_beta || graph_zeta) errs.push_back(to_string(variant) + " must not carry MRF graphs");
  }
  return errs;
}

void ModelSpec::validate(const SurvivalDataset& data) const {
  join_throw(validation_errors(data), "invalid model spec");
}

ParameterState ParameterState::zeros(Eigen::Index d, const std::vector<Eigen::Index>& p_per_type) {
  ParameterState s;
  const auto L = static_cast<Eigen::Index>(p_per_type.size());
  s.xi = VectorXd::Zero(d);
  s.beta0 = VectorXd::Zero(L);
  s.zeta0 = VectorXd::Zero(L);
  s.tau2 = VectorXd::Ones(L);
  s.w2 = VectorXd::Ones(L);
  for (Eigen::Index l = 0; l < L; ++l) {
    const auto pl = p_per_type[static_cast<size_t>(l)];
    s.beta.push_back(VectorXd::Zero(pl));
    s.zeta.push_back(VectorXd::Zero(pl));
    s.gamma.push_back(VectorXi::Ones(pl));
    s.eta.push_back(VectorXi::Ones(pl));
    s.pi.push_back(VectorXd::Constant(pl, 0.5));
    s.rho.push_back(VectorXd::Constant(pl, 0.5));
  }
  return s;
}

std::vector<std::string> ParameterState::validation_errors(const SurvivalDataset& data) const {
  std::vector<std::string> errs;
  const Eigen::Index Ld = data.L();
  if (xi.size() != data.d()) errs.push_back("xi length != d");
  if (beta0.size() != Ld || zeta0.size() != Ld || tau2.size() != Ld || w2.size() != Ld)
    errs.push_back("per-cell-type vectors do not all have length L");
  if (static_cast<Eigen::Index>(beta.size()) != Ld || static_cast<Eigen::Index>(zeta.size()) != Ld ||
      static_cast<Eigen::Index>(gamma.size()) != Ld || static_cast<Eigen::Index>(eta.size()) != Ld)
    errs.push_back("coefficient block counts != L");
  else {
    for (Eigen::Index l = 0; l < Ld; ++l) {
      const auto sl = static_cast<size_t>(l);
      const Eigen::Index pl = data.p(l);
      if (beta[sl].size() != pl || gamma[sl].size() != pl)
        errs.push_back("beta/gamma block " + std::to_string(l + 1) + " length != p_l");
      if (zeta[sl].size() != pl || eta[sl].size() != pl)
        errs.push_back("zeta/eta block " + std::to_string(l + 1) + " length != p_l");
      for (Eigen::Index j = 0; j < std::min(pl, beta[sl].size()); ++j) {
        if (gamma[sl](j) == 0 && beta[sl](j) != 0.0)
          errs.push_back("spike violated: gamma[" + std::to_string(j + 1) + "," + std::to_string(l + 1) +
                         "]=0 but beta != 0");
        if (gamma[sl](j) != 0 && gamma[sl](j) != 1)
          errs.push_back("gamma entries must be 0/1");
      }
      for (Eigen::Index j = 0; j < std::min(pl, zeta[sl].size()); ++j) {
        if (eta[sl](j) == 0 && zeta[sl](j) != 0.0)
          errs.push_back("spike violated: eta[" + std::to_string(j + 1) + "," + std::to_string(l + 1) +
                         "]=0 but zeta != 0");
        if (eta[sl](j) != 0 && eta[sl](j) != 1)
          errs.push_back("eta entries must be 0/1");
      }
      if (sl < pi.size())
        for (Eigen::Index j = 0; j < pi[sl].size(); ++j)
          if (!(pi[sl](j) > 0.0 && pi[sl](j) < 1.0)) errs.push_back("pi entries must lie in (0,1)");
      if (sl < rho.size())
        for (Eigen::Index j = 0; j < rho[sl].size(); ++j)
          if (!(rho[sl](j) > 0.0 && rho[sl](j) < 1.0)) errs.push_back("rho entries must lie in (0,1)");
    }
  }
  auto pos = [&errs](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) errs.push_back(std::string(name) + " must be strictly positive");
  };
  pos(kappa, "kappa");
  pos(v2, "v2"); pos(v02, "v02"); pos(tau02, "tau02"); pos(w02, "w02");
  for (Eigen::Index l = 0; l < tau2.size(); ++l) pos(tau2(l), "tau2");
  for (Eigen::Index l = 0; l < w2.size(); ++l) pos(w2(l), "w2");
  return errs;
}

void ParameterState::validate(const SurvivalDataset& data) const {
  join_throw(validation_errors(data), "invalid parameter state");
}

namespace {
template <typename Vec, typename Out>
Out flatten_blocks(const std::vector<Vec>& blocks) {
  Eigen::Index total = 0;
  for (const auto& b : blocks) total += b.size();
  Out out(total);
  Eigen::Index k = 0;
  for (const auto& b : blocks)
    for (Eigen::Index j = 0; j < b.size(); ++j) out(k++) = b(j);
  return out;
}
}  // namespace

VectorXd ParameterState::flatten_beta() const { return flatten_blocks<VectorXd, VectorXd>(beta); }
VectorXd ParameterState::flatten_zeta() const { return flatten_blocks<VectorXd, VectorXd>(zeta); }
VectorXi ParameterState::flatten_gamma() const { return flatten_blocks<VectorXi, VectorXi>(gamma); }
VectorXi ParameterState::flatten_eta() const { return flatten_blocks<VectorXi, VectorXi>(eta); }

}  // namespace gptcm
