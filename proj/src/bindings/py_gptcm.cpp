// Python bindings for the core operations: simulation, fitting,
// summaries, prediction and the evaluation metrics.

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "gptcm/evaluation.hpp"
#include "gptcm/io.hpp"
#include "gptcm/mcmc.hpp"
#include "gptcm/model.hpp"
#include "gptcm/simulation.hpp"

namespace py = pybind11;
using namespace gptcm;

namespace {

SurvivalDataset dataset_from_parts(const VectorXd& time, const VectorXi& event,
                                   const MatrixXd& clinical, const std::vector<MatrixXd>& cell_covariates,
                                   const MatrixXd& proportions) {
  SurvivalDataset ds;
  ds.time = time;
  ds.event = event;
  ds.clinical = clinical;
  ds.cell_covariates = cell_covariates;
  ds.proportions = proportions;
  ds.validate();
  return ds;
}

MrfGraph graph_from_parts(Eigen::Index dim, const std::vector<std::tuple<Eigen::Index, Eigen::Index, double>>& edges,
                          double a, double b) {
  MrfGraph g;
  g.dim = dim;
  g.a = a;
  g.b = b;
  for (const auto& [i, j, w] : edges) g.add_edge(i, j, w);
  g.finalize();
  return g;
}

py::dict dataset_to_dict(const SurvivalDataset& ds) {
  py::dict d;
  d["time"] = ds.time;
  d["event"] = ds.event;
  d["clinical"] = ds.clinical;
  py::list xs;
  for (const auto& x : ds.cell_covariates) xs.append(x);
  d["cell_covariates"] = xs;
  d["proportions"] = ds.proportions;
  return d;
}

py::dict truth_to_dict(const SimulationTruth& t) {
  py::dict d;
  d["xi0"] = t.xi0;
  d["xi"] = t.xi;
  d["kappa"] = t.kappa;
  d["beta"] = t.flatten_beta();
  d["zeta"] = t.flatten_zeta();
  d["zeta0"] = t.zeta0;
  d["gamma"] = t.gamma_true;
  d["eta"] = t.eta_true;
  d["cured"] = t.cured;
  d["latent_time"] = t.latent_time;
  d["underlying_p"] = t.underlying_p;
  return d;
}

struct PyFit {
  FitResult result;
  SurvivalDataset data;

  py::dict summary() const {
    const auto s = summarize(result);
    py::dict out;
    py::dict scalars;
    for (const auto& [name, sc] : s.scalars) {
      py::dict one;
      one["mean"] = sc.mean;
      one["sd"] = sc.sd;
      one["q025"] = sc.q025;
      one["q975"] = sc.q975;
      scalars[name.c_str()] = one;
    }
    out["scalars"] = scalars;
    out["beta_mean"] = s.beta_mean;
    out["beta_mpm"] = s.beta_mpm;
    out["zeta_mean"] = s.zeta_mean;
    out["zeta_mpm"] = s.zeta_mpm;
    out["mpip_gamma"] = s.mpip_gamma;
    out["mpip_eta"] = s.mpip_eta;
    out["mpm_gamma"] = s.mpm_gamma;
    out["mpm_eta"] = s.mpm_eta;
    out["n_draws"] = s.n_draws;
    out["clamp_count"] = s.clamp_count;
    out["incident_count"] = s.incident_count;
    return out;
  }

  MatrixXd coefficient_draws(const std::string& which) const {
    std::vector<const ParameterState*> draws;
    for (const auto& chain : result.chains)
      for (const auto& d : chain.draws) draws.push_back(&d);
    if (draws.empty()) throw domain_error("fit has no draws");
    const auto& first = *draws.front();
    Eigen::Index pl = 0;
    for (const auto& b : first.beta) pl += b.size();
    MatrixXd out(static_cast<Eigen::Index>(draws.size()), pl);
    for (size_t t = 0; t < draws.size(); ++t) {
      if (which == "beta")
        out.row(static_cast<Eigen::Index>(t)) = draws[t]->flatten_beta();
      else if (which == "zeta")
        out.row(static_cast<Eigen::Index>(t)) = draws[t]->flatten_zeta();
      else if (which == "gamma")
        out.row(static_cast<Eigen::Index>(t)) = draws[t]->flatten_gamma().cast<double>();
      else if (which == "eta")
        out.row(static_cast<Eigen::Index>(t)) = draws[t]->flatten_eta().cast<double>();
      else
        throw domain_error("unknown coefficient block '" + which + "'");
    }
    return out;
  }

  std::vector<double> scalar_draws(const std::string& name) const {
    std::vector<double> out;
    for (const auto& chain : result.chains) {
      auto v = extract_scalar(chain, name);
      out.insert(out.end(), v.begin(), v.end());
    }
    return out;
  }

  MatrixXd predict(const SurvivalDataset& subjects, const VectorXd& grid, const std::string& mode) const {
    PredictMode m = PredictMode::PlugInMPM;
    if (mode == "mean")
      m = PredictMode::PlugInMean;
    else if (mode == "draws")
      m = PredictMode::DrawAverage;
    else if (mode == "auto")
      m = has_selection(result.spec.variant) ? PredictMode::PlugInMPM : PredictMode::PlugInMean;
    else if (mode != "mpm")
      throw domain_error("unknown prediction mode '" + mode + "'");
    return predict_survival(result, subjects, grid, m).surv;
  }

  std::map<std::string, double> rhat() const { return {result.rhat.begin(), result.rhat.end()}; }
  std::map<std::string, double> ess() const { return {result.ess.begin(), result.ess.end()}; }
  bool converged() const { return result.converged; }
  std::string variant() const { return to_string(result.spec.variant); }
  void save(const std::string& dir) const { io::write_chain_store(result, data, dir); }
};

PyFit fit_py(const SurvivalDataset& data, const std::string& variant, long iterations, long warmup,
             long thin, int chains, std::uint64_t seed, int threads,
             std::optional<MrfGraph> graph_beta, std::optional<MrfGraph> graph_zeta, double c,
             double sparsity, bool prior_only, bool record_pointwise) {
  ModelSpec spec;
  spec.variant = variant_from_string(variant);
  if (c > 0) spec.hyper.c = c;
  if (sparsity > 0) spec.hyper.s = sparsity;
  spec.graph_beta = std::move(graph_beta);
  spec.graph_zeta = std::move(graph_zeta);
  if (spec.variant == Variant::MRF2 && spec.graph_beta && !spec.graph_zeta)
    spec.graph_zeta = spec.graph_beta;
  RunConfig cfg;
  cfg.n_iterations = iterations;
  cfg.n_warmup = warmup;
  cfg.thin = thin;
  cfg.n_chains = chains;
  cfg.seed = seed;
  cfg.threads = threads;
  cfg.prior_only = prior_only;
  cfg.record_pointwise = record_pointwise;
  PyFit out{run_fit(data, spec, cfg), data};
  if (!out.result.converged) throw fit_error("fit failed: " + out.result.failure);
  return out;
}

}  // namespace

PYBIND11_MODULE(_gptcm, m) {
  m.doc() = "Bayesian generalized promotion time cure models";

  py::register_exception<domain_error>(m, "DomainError", PyExc_ValueError);
  py::register_exception<fit_error>(m, "FitError", PyExc_RuntimeError);

  py::class_<SurvivalDataset>(m, "SurvivalDataset")
      .def(py::init(&dataset_from_parts), py::arg("time"), py::arg("event"), py::arg("clinical"),
           py::arg("cell_covariates"), py::arg("proportions"))
      .def_property_readonly("n", &SurvivalDataset::n)
      .def_property_readonly("L", &SurvivalDataset::L)
      .def_readonly("time", &SurvivalDataset::time)
      .def_readonly("event", &SurvivalDataset::event)
      .def_readonly("clinical", &SurvivalDataset::clinical)
      .def_readonly("cell_covariates", &SurvivalDataset::cell_covariates)
      .def_readonly("proportions", &SurvivalDataset::proportions)
      .def("to_dict", &dataset_to_dict);

  py::class_<MrfGraph>(m, "MrfGraph")
      .def(py::init(&graph_from_parts), py::arg("dim"), py::arg("edges"), py::arg("a"), py::arg("b"))
      .def_readonly("dim", &MrfGraph::dim)
      .def_readonly("a", &MrfGraph::a)
      .def_readonly("b", &MrfGraph::b);

  py::class_<PyFit>(m, "Fit")
      .def("summary", &PyFit::summary)
      .def("coefficient_draws", &PyFit::coefficient_draws, py::arg("which"))
      .def("scalar_draws", &PyFit::scalar_draws, py::arg("name"))
      .def("predict", &PyFit::predict, py::arg("subjects"), py::arg("times"), py::arg("mode") = "auto")
      .def("rhat", &PyFit::rhat)
      .def("ess", &PyFit::ess)
      .def("converged", &PyFit::converged)
      .def("variant", &PyFit::variant)
      .def("save", &PyFit::save, py::arg("directory"));

  // core model functions
  m.def("weibull_survival", &weibull_survival, py::arg("t"), py::arg("scale"), py::arg("shape"));
  m.def("weibull_scale_from_mean", &weibull_scale_from_mean, py::arg("mean"), py::arg("shape"));
  m.def("population_survival", &population_survival, py::arg("t"), py::arg("theta"),
        py::arg("proportions"), py::arg("survivals"));
  m.def("population_log_density", &population_log_density, py::arg("t"), py::arg("theta"),
        py::arg("proportions"), py::arg("scales"), py::arg("shape"));
  m.def("dirichlet_log_density", &dirichlet_log_density, py::arg("composition"), py::arg("alpha"));

  // simulation
  m.def(
      "simulate",
      [](const std::string& preset, long n, long p, std::uint64_t seed) {
        SimConfig cfg;
        if (preset == "low-dim")
          cfg = SimConfig::low_dim(seed);
        else if (preset == "high-dim")
          cfg = SimConfig::high_dim(seed);
        else if (preset == "cox-misspec")
          cfg = SimConfig::cox_misspec_design(seed);
        else
          throw domain_error("unknown preset '" + preset + "'");
        cfg.n = n;
        if (p > 0 && cfg.mode == SimConfig::Mode::gptcm) {
          cfg.p = p;
          cfg.fill_default_coefficients();
        }
        auto [ds, truth] = simulate(cfg);
        return py::make_tuple(ds, truth_to_dict(truth));
      },
      py::arg("preset") = "low-dim", py::arg("n") = 200, py::arg("p") = -1, py::arg("seed") = 1);
  m.def(
      "precision_graph",
      [](long p, long L, double rho_cross, const std::vector<double>& rho_within, double a, double b) {
        return build_mrf_graph_from_precision(build_covariance(p, L, rho_cross, rho_within), p, L, a, b);
      },
      py::arg("p"), py::arg("L"), py::arg("rho_cross") = 0.1,
      py::arg("rho_within") = std::vector<double>{0.13, 0.14, 0.15}, py::arg("a") = -2.1972245773362196,
      py::arg("b") = 0.5);
  m.def("same_variable_graph", &build_same_variable_graph, py::arg("p"), py::arg("L"), py::arg("a"),
        py::arg("b"));

  // fitting
  m.def("fit", &fit_py, py::arg("data"), py::arg("variant") = "mrf2", py::arg("iterations") = 25000,
        py::arg("warmup") = 5000, py::arg("thin") = 1, py::arg("chains") = 1, py::arg("seed") = 1,
        py::arg("threads") = 1, py::arg("graph_beta") = std::nullopt,
        py::arg("graph_zeta") = std::nullopt, py::arg("c") = -1.0, py::arg("sparsity") = -1.0,
        py::arg("prior_only") = false, py::arg("record_pointwise") = false);

  m.def(
      "load_fit",
      [](const std::string& dir, const SurvivalDataset& data) {
        return PyFit{io::read_chain_store(dir), data};
      },
      py::arg("directory"), py::arg("data"));

  // evaluation
  m.def(
      "kaplan_meier",
      [](const VectorXd& time, const VectorXi& event, const VectorXd& grid) {
        const auto km = kaplan_meier(time, event);
        VectorXd out(grid.size());
        for (Eigen::Index g = 0; g < grid.size(); ++g) out(g) = km(grid(g));
        return out;
      },
      py::arg("time"), py::arg("event"), py::arg("times"));
  m.def(
      "brier_score",
      [](const MatrixXd& curves, const VectorXd& grid, const VectorXd& time, const VectorXi& event) {
        SurvivalDataset v;
        v.time = time;
        v.event = event;
        PredictionCurve pred;
        pred.grid = grid;
        pred.surv = curves;
        const auto b = brier_score(pred, v);
        return py::make_tuple(b.score, b.unreliable, b.integrated());
      },
      py::arg("curves"), py::arg("times"), py::arg("time"), py::arg("event"));
  m.def("selection_metrics",
        [](const VectorXi& mask, const VectorXi& truth) {
          const auto sm = selection_metrics(mask, truth);
          py::dict d;
          if (sm.accuracy) d["accuracy"] = *sm.accuracy;
          if (sm.sensitivity) d["sensitivity"] = *sm.sensitivity;
          if (sm.specificity) d["specificity"] = *sm.specificity;
          return d;
        },
        py::arg("mask"), py::arg("truth"));
  m.def("scaled_rmse", &scaled_rmse, py::arg("estimate"), py::arg("truth"));

  // dataset bundle IO
  m.def("write_dataset", [](const SurvivalDataset& ds, const std::string& dir) { io::write_dataset(ds, dir); });
  m.def("read_dataset", [](const std::string& dir) { return io::read_dataset(dir); });
}
