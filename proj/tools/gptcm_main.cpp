// Command-line front end: simulate | fit | summarize | evaluate | predict.
// Exit codes: 0 ok, 2 input error, 3 runtime/convergence failure.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "gptcm/evaluation.hpp"
#include "gptcm/io.hpp"
#include "gptcm/mcmc.hpp"
#include "gptcm/simulation.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace gptcm;

namespace {

constexpr const char* kVersion = "gptcm 0.1.0";

json load_config(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) throw domain_error("cannot open config file '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw domain_error("cannot parse config file '" + path + "': " + e.what());
  }
  return j;
}

// config values fill in flags the user did not pass on the command line
template <typename T>
void config_default(const CLI::App& app, const json& section, const std::string& flag, T& value) {
  if (app.count("--" + flag) > 0) return;
  if (!section.contains(flag)) return;
  value = section.at(flag).get<T>();
}

void write_manifest(const fs::path& dir, const std::string& command, const json& resolved,
                    const std::vector<std::pair<std::string, std::string>>& digests,
                    double wall_seconds) {
  json m;
  m["tool"] = kVersion;
  m["command"] = command;
  m["config"] = resolved;
  m["config_hash"] = io::fnv1a_hex(resolved.dump());
  json d = json::object();
  for (const auto& [name, digest] : digests) d[name] = digest;
  m["input_digests"] = d;
  m["wall_seconds"] = wall_seconds;
  std::ofstream out(dir / "manifest.json");
  out << m.dump(2) << "\n";
}

VectorXd make_grid(const SurvivalDataset& data, double quantile, int points) {
  std::vector<double> times(data.time.data(), data.time.data() + data.n());
  std::sort(times.begin(), times.end());
  const double tmax = times[static_cast<size_t>(quantile * (times.size() - 1))];
  VectorXd grid(points);
  for (int g = 0; g < points; ++g) grid(g) = tmax * (g + 1) / static_cast<double>(points);
  return grid;
}

ModelSpec build_spec(Variant variant, const HyperParams& hyper, const std::string& graph_path,
                     const std::string& graph_zeta_path, const fs::path& data_dir) {
  ModelSpec spec;
  spec.variant = variant;
  spec.hyper = hyper;
  if (is_mrf(variant)) {
    fs::path gpath = graph_path.empty() ? data_dir / "graph.json" : fs::path(graph_path);
    if (!fs::exists(gpath))
      throw domain_error("MRF variants need a graph file; '" + gpath.string() + "' does not exist");
    spec.graph_beta = io::read_graph(gpath);
    if (variant == Variant::MRF2) {
      fs::path gz = graph_zeta_path.empty() ? gpath : fs::path(graph_zeta_path);
      spec.graph_zeta = io::read_graph(gz);
    }
  }
  return spec;
}

int run_cli(int argc, char** argv) {
  CLI::App app{"Bayesian generalized promotion time cure models"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  std::string config_path;
  app.add_option("--config", config_path, "JSON config file; command-line flags override its keys")
      ->expected(1);

  // ---- simulate ----
  auto* sim = app.add_subcommand("simulate", "generate a synthetic dataset bundle");
  std::string sim_preset = "low-dim";
  long sim_n = 200, sim_p = -1;
  std::uint64_t sim_seed = 1;
  std::string sim_out = "sim_out";
  bool sim_validation = false;
  double sim_mrf_b = 0.5, sim_sparsity = 0.1;
  sim->add_option("--preset", sim_preset, "low-dim | high-dim | cox-misspec")->expected(1);
  sim->add_option("--n", sim_n, "subjects");
  sim->add_option("--p", sim_p, "covariates per cell type (default from preset)");
  sim->add_option("--seed", sim_seed, "RNG seed");
  sim->add_option("--out-dir", sim_out, "output directory");
  sim->add_flag("--validation", sim_validation, "also write an independent validation set (seed+1)");
  sim->add_option("--mrf-b", sim_mrf_b, "smoothing strength stored in the emitted graph");
  sim->add_option("--sparsity", sim_sparsity, "target sparsity s; the graph stores a = logit(s)");

  // ---- fit ----
  auto* fit_cmd = app.add_subcommand("fit", "run MCMC on a dataset bundle");
  std::string fit_data, fit_variant = "mrf2", fit_out = "fit_out", fit_graph, fit_graph_zeta;
  long fit_iterations = 25000, fit_warmup = 5000, fit_thin = 1;
  int fit_chains = 1, fit_threads = 1;
  std::uint64_t fit_seed = 1;
  bool fit_pointwise = false, fit_prior_only = false;
  double fit_mrf_b = -1.0, fit_sparsity = -1.0, fit_c = -1.0;
  fit_cmd->add_option("--data", fit_data, "dataset bundle directory")->required();
  fit_cmd->add_option("--variant", fit_variant, "noBVS1|noBVS2|Ber1|Ber2|MRF1|MRF2");
  fit_cmd->add_option("--iterations", fit_iterations, "total MCMC iterations");
  fit_cmd->add_option("--warmup", fit_warmup, "warmup iterations (discarded)");
  fit_cmd->add_option("--thin", fit_thin, "thinning stride");
  fit_cmd->add_option("--chains", fit_chains, "number of chains");
  fit_cmd->add_option("--threads", fit_threads, "worker threads for chains");
  fit_cmd->add_option("--seed", fit_seed, "RNG seed");
  fit_cmd->add_option("--out-dir", fit_out, "chain store directory");
  fit_cmd->add_option("--graph", fit_graph, "MRF graph file (default: <data>/graph.json)");
  fit_cmd->add_option("--graph-zeta", fit_graph_zeta, "separate graph for the proportion side");
  fit_cmd->add_flag("--pointwise", fit_pointwise, "record per-subject log likelihoods");
  fit_cmd->add_flag("--prior-only", fit_prior_only, "disable the likelihood (prior checks)");
  fit_cmd->add_option("--mrf-b", fit_mrf_b, "override the graph's smoothing strength b");
  fit_cmd->add_option("--sparsity", fit_sparsity, "override the graph's sparsity a = logit(s)");
  fit_cmd->add_option("--c", fit_c, "Beta(1, c p) tuning scalar for Ber variants");

  // ---- summarize ----
  auto* sum_cmd = app.add_subcommand("summarize", "posterior summaries of a chain store");
  std::string sum_fit, sum_out = "summary_out";
  sum_cmd->add_option("--fit", sum_fit, "chain store directory")->required();
  sum_cmd->add_option("--out-dir", sum_out, "output directory");

  // ---- evaluate ----
  auto* eval_cmd = app.add_subcommand("evaluate", "prediction and selection metrics");
  std::string eval_fit, eval_data, eval_truth, eval_out = "eval_out", eval_mode = "auto";
  double eval_quantile = 0.8;
  int eval_points = 50;
  eval_cmd->add_option("--fit", eval_fit, "chain store directory")->required();
  eval_cmd->add_option("--data", eval_data, "validation dataset bundle")->required();
  eval_cmd->add_option("--truth", eval_truth, "truth file for coefficient metrics");
  eval_cmd->add_option("--out-dir", eval_out, "output directory");
  eval_cmd->add_option("--grid-quantile", eval_quantile, "grid upper end as a time quantile");
  eval_cmd->add_option("--grid-points", eval_points, "number of grid points");
  eval_cmd->add_option("--mode", eval_mode, "prediction mode: auto|mpm|mean|draws");

  // ---- predict ----
  auto* pred_cmd = app.add_subcommand("predict", "survival curves for new subjects");
  std::string pred_fit, pred_data, pred_out = "predict_out", pred_times, pred_mode = "auto";
  pred_cmd->add_option("--fit", pred_fit, "chain store directory")->required();
  pred_cmd->add_option("--data", pred_data, "dataset bundle with the new subjects")->required();
  pred_cmd->add_option("--out-dir", pred_out, "output directory");
  pred_cmd->add_option("--times", pred_times, "comma-separated evaluation times");
  pred_cmd->add_option("--mode", pred_mode, "prediction mode: auto|mpm|mean|draws");

  bool verbose = false;
  app.add_flag("--verbose", verbose, "progress to stderr");
  for (auto* sub : app.get_subcommands({})) sub->fallthrough();

  CLI11_PARSE(app, argc, argv);
  const json config = load_config(config_path);
  const auto t_start = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  };

  auto pick_mode = [](const std::string& mode, Variant v) {
    if (mode == "mpm") return PredictMode::PlugInMPM;
    if (mode == "mean") return PredictMode::PlugInMean;
    if (mode == "draws") return PredictMode::DrawAverage;
    if (mode == "auto") return has_selection(v) ? PredictMode::PlugInMPM : PredictMode::PlugInMean;
    throw domain_error("unknown prediction mode '" + mode + "'");
  };

  if (*sim) {
    const json section = config.value("simulate", json::object());
    config_default(*sim, section, "preset", sim_preset);
    config_default(*sim, section, "n", sim_n);
    config_default(*sim, section, "p", sim_p);
    config_default(*sim, section, "seed", sim_seed);
    config_default(*sim, section, "out-dir", sim_out);
    config_default(*sim, section, "mrf-b", sim_mrf_b);
    config_default(*sim, section, "sparsity", sim_sparsity);

    SimConfig cfg;
    if (sim_preset == "low-dim") {
      cfg = SimConfig::low_dim(sim_seed);
    } else if (sim_preset == "high-dim") {
      cfg = SimConfig::high_dim(sim_seed);
    } else if (sim_preset == "cox-misspec") {
      cfg = SimConfig::cox_misspec_design(sim_seed);
    } else {
      throw domain_error("unknown preset '" + sim_preset + "'");
    }
    cfg.n = sim_n;
    cfg.seed = sim_seed;
    if (sim_p > 0 && cfg.mode == SimConfig::Mode::gptcm) {
      cfg.p = sim_p;
      cfg.fill_default_coefficients();
    }
    const double a = std::log(sim_sparsity / (1.0 - sim_sparsity));

    auto emit = [&](const SimConfig& c, const fs::path& dir) {
      auto [ds, truth] = simulate(c);
      io::write_dataset(ds, dir);
      io::write_truth(truth, dir / "truth.json");
      MrfGraph graph =
          c.mode == SimConfig::Mode::gptcm
              ? build_mrf_graph_from_precision(build_covariance(c.p, c.L, c.rho_cross, c.rho_within),
                                               c.p, c.L, a, sim_mrf_b)
              : build_same_variable_graph(c.cox_effects.size(), c.cox_pseudo_L, a, sim_mrf_b);
      io::write_graph(graph, dir / "graph.json");
    };
    emit(cfg, sim_out);
    if (sim_validation) {
      auto vcfg = cfg;
      vcfg.seed = cfg.seed + 1;
      emit(vcfg, fs::path(sim_out) / "validation");
    }
    json resolved{{"preset", sim_preset}, {"n", sim_n},         {"p", cfg.p},
                  {"seed", sim_seed},     {"out_dir", sim_out}, {"validation", sim_validation},
                  {"mrf_b", sim_mrf_b},   {"sparsity", sim_sparsity}};
    write_manifest(sim_out, "simulate", resolved, {}, elapsed());
    if (verbose) std::cerr << "simulated " << sim_n << " subjects into " << sim_out << "\n";
    return 0;
  }

  if (*fit_cmd) {
    const json section = config.value("fit", json::object());
    config_default(*fit_cmd, section, "variant", fit_variant);
    config_default(*fit_cmd, section, "iterations", fit_iterations);
    config_default(*fit_cmd, section, "warmup", fit_warmup);
    config_default(*fit_cmd, section, "thin", fit_thin);
    config_default(*fit_cmd, section, "chains", fit_chains);
    config_default(*fit_cmd, section, "threads", fit_threads);
    config_default(*fit_cmd, section, "seed", fit_seed);
    config_default(*fit_cmd, section, "out-dir", fit_out);
    config_default(*fit_cmd, section, "graph", fit_graph);
    config_default(*fit_cmd, section, "mrf-b", fit_mrf_b);
    config_default(*fit_cmd, section, "sparsity", fit_sparsity);
    config_default(*fit_cmd, section, "c", fit_c);

    const auto data = io::read_dataset(fit_data);
    HyperParams hyper;
    if (fit_c > 0) hyper.c = fit_c;
    if (fit_sparsity > 0) hyper.s = fit_sparsity;
    const Variant variant = variant_from_string(fit_variant);
    auto spec = build_spec(variant, hyper, fit_graph, fit_graph_zeta, fit_data);
    if (spec.graph_beta) {
      if (fit_sparsity > 0) spec.graph_beta->a = std::log(fit_sparsity / (1.0 - fit_sparsity));
      if (fit_mrf_b >= 0) spec.graph_beta->b = fit_mrf_b;
    }
    if (spec.graph_zeta) {
      if (fit_sparsity > 0) spec.graph_zeta->a = std::log(fit_sparsity / (1.0 - fit_sparsity));
      if (fit_mrf_b >= 0) spec.graph_zeta->b = fit_mrf_b;
    }

    RunConfig rc;
    rc.n_iterations = fit_iterations;
    rc.n_warmup = fit_warmup;
    rc.thin = fit_thin;
    rc.n_chains = fit_chains;
    rc.threads = fit_threads;
    rc.seed = fit_seed;
    rc.record_pointwise = fit_pointwise;
    rc.prior_only = fit_prior_only;

    if (verbose)
      std::cerr << "fitting " << to_string(variant) << " for " << fit_iterations << " iterations\n";
    auto result = run_fit(data, spec, rc);
    io::write_chain_store(result, data, fit_out, io::file_digest(fs::path(fit_data) / "surv.csv"));
    if (!result.converged) {
      std::cerr << "GPTCM_RUNTIME_ERROR: " << result.failure << "\n";
      return 3;
    }
    if (verbose) std::cerr << "wrote chain store to " << fit_out << "\n";
    return 0;
  }

  if (*sum_cmd) {
    const json section = config.value("summarize", json::object());
    config_default(*sum_cmd, section, "out-dir", sum_out);
    auto fit = io::read_chain_store(sum_fit);
    auto summary = summarize(fit);
    io::write_summary(summary, fit, sum_out);
    json resolved{{"fit", sum_fit}, {"out_dir", sum_out}};
    write_manifest(sum_out, "summarize", resolved,
                   {{"manifest", io::file_digest(fs::path(sum_fit) / "manifest.json")}}, elapsed());
    return 0;
  }

  if (*eval_cmd) {
    const json section = config.value("evaluate", json::object());
    config_default(*eval_cmd, section, "out-dir", eval_out);
    config_default(*eval_cmd, section, "grid-quantile", eval_quantile);
    config_default(*eval_cmd, section, "grid-points", eval_points);
    auto fit = io::read_chain_store(eval_fit);
    auto data = io::read_dataset(eval_data);
    const auto grid = make_grid(data, eval_quantile, eval_points);
    const auto mode = pick_mode(eval_mode, fit.spec.variant);

    auto pred = predict_survival(fit, data, grid, mode);
    auto bs_model = brier_score(pred, data);
    auto km = kaplan_meier(data.time, data.event);
    auto bs_km = brier_score(curve_from_step(km, data.n(), grid), data);
    fs::create_directories(eval_out);
    io::write_brier({{to_string(fit.spec.variant), bs_model}, {"km", bs_km}},
                    fs::path(eval_out) / "brier.csv");

    json metrics;
    metrics["integrated_brier_model"] = bs_model.integrated();
    metrics["integrated_brier_km"] = bs_km.integrated();
    std::vector<std::pair<std::string, std::string>> digests{
        {"surv.csv", io::file_digest(fs::path(eval_data) / "surv.csv")}};
    if (!eval_truth.empty()) {
      auto truth = io::read_truth(eval_truth);
      auto summary = summarize(fit);
      metrics["rmse_beta"] = scaled_rmse(summary.beta_mpm, truth.flatten_beta());
      if (summary.has_measurement_error)
        metrics["rmse_zeta"] = scaled_rmse(summary.zeta_mpm, truth.flatten_zeta());
      if (summary.has_selection) {
        auto gm = selection_metrics(summary.mpm_gamma, truth.gamma_true);
        json jg;
        if (gm.accuracy) jg["accuracy"] = *gm.accuracy;
        if (gm.sensitivity) jg["sensitivity"] = *gm.sensitivity;
        if (gm.specificity) jg["specificity"] = *gm.specificity;
        metrics["selection_gamma"] = jg;
        if (summary.has_measurement_error) {
          auto em = selection_metrics(summary.mpm_eta, truth.eta_true);
          json je;
          if (em.accuracy) je["accuracy"] = *em.accuracy;
          if (em.sensitivity) je["sensitivity"] = *em.sensitivity;
          if (em.specificity) je["specificity"] = *em.specificity;
          metrics["selection_eta"] = je;
        }
      }
      digests.emplace_back("truth.json", io::file_digest(eval_truth));
    }
    std::ofstream(fs::path(eval_out) / "metrics.json") << metrics.dump(2) << "\n";
    json resolved{{"fit", eval_fit},
                  {"data", eval_data},
                  {"truth", eval_truth},
                  {"out_dir", eval_out},
                  {"grid_quantile", eval_quantile},
                  {"grid_points", eval_points},
                  {"mode", eval_mode}};
    write_manifest(eval_out, "evaluate", resolved, digests, elapsed());
    return 0;
  }

  if (*pred_cmd) {
    const json section = config.value("predict", json::object());
    config_default(*pred_cmd, section, "out-dir", pred_out);
    auto fit = io::read_chain_store(pred_fit);
    auto data = io::read_dataset(pred_data);
    VectorXd grid;
    if (!pred_times.empty()) {
      std::vector<double> ts;
      std::stringstream ss(pred_times);
      std::string cell;
      while (std::getline(ss, cell, ',')) ts.push_back(std::stod(cell));
      grid = Eigen::Map<VectorXd>(ts.data(), static_cast<Eigen::Index>(ts.size()));
    } else {
      grid = make_grid(data, 0.95, 50);
    }
    const auto mode = pick_mode(pred_mode, fit.spec.variant);
    auto pred = predict_survival(fit, data, grid, mode);
    fs::create_directories(pred_out);
    io::write_prediction(pred, fs::path(pred_out) / "curves.csv");
    json resolved{{"fit", pred_fit}, {"data", pred_data}, {"out_dir", pred_out}, {"mode", pred_mode}};
    write_manifest(pred_out, "predict", resolved,
                   {{"surv.csv", io::file_digest(fs::path(pred_data) / "surv.csv")}}, elapsed());
    return 0;
  }

  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run_cli(argc, argv);
  } catch (const fit_error& e) {
    std::cerr << "GPTCM_RUNTIME_ERROR: " << e.what() << "\n";
    return 3;
  } catch (const contract_error& e) {
    std::cerr << "GPTCM_RUNTIME_ERROR: " << e.what() << "\n";
    return 3;
  } catch (const domain_error& e) {
    std::cerr << "GPTCM_INPUT_ERROR: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "GPTCM_INPUT_ERROR: " << e.what() << "\n";
    return 2;
  }
}
