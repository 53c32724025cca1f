#include "gptcm/io.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace gptcm::io {

using nlohmann::json;

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016" PRIx64, h);
  return buf;
}

std::string file_digest(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw domain_error("cannot open '" + path.string() + "' for digest");
  std::ostringstream os;
  os << in.rdbuf();
  return fnv1a_hex(os.str());
}

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw domain_error("cannot write '" + path.string() + "'");
  out << text;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw domain_error("cannot read '" + path.string() + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

// minimal CSV: no quoting needed (numeric tables with fixed headers)
struct Csv {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

Csv read_csv(const fs::path& path) {
  Csv csv;
  std::ifstream in(path);
  if (!in) throw domain_error("missing file '" + path.string() + "'");
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (first) {
      csv.header = cells;
      first = false;
    } else {
      csv.rows.push_back(cells);
    }
  }
  return csv;
}

double parse_double(const std::string& s, const std::string& where) {
  try {
    size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw domain_error("cannot parse number '" + s + "' in " + where);
  }
}

json hyper_to_json(const HyperParams& h) {
  return json{{"a_kappa", h.a_kappa}, {"b_kappa", h.b_kappa}, {"a_v", h.a_v},     {"b_v", h.b_v},
              {"a_v0", h.a_v0},       {"b_v0", h.b_v0},       {"a_tau", h.a_tau}, {"b_tau", h.b_tau},
              {"a_tau0", h.a_tau0},   {"b_tau0", h.b_tau0},   {"a_w", h.a_w},     {"b_w", h.b_w},
              {"a_w0", h.a_w0},       {"b_w0", h.b_w0},       {"a_pi", h.a_pi},   {"b_pi", h.b_pi},
              {"a_rho", h.a_rho},     {"b_rho", h.b_rho},     {"c", h.c},         {"s", h.s}};
}

HyperParams hyper_from_json(const json& j) {
  HyperParams h;
  h.a_kappa = j.value("a_kappa", h.a_kappa);
  h.b_kappa = j.value("b_kappa", h.b_kappa);
  h.a_v = j.value("a_v", h.a_v);
  h.b_v = j.value("b_v", h.b_v);
  h.a_v0 = j.value("a_v0", h.a_v0);
  h.b_v0 = j.value("b_v0", h.b_v0);
  h.a_tau = j.value("a_tau", h.a_tau);
  h.b_tau = j.value("b_tau", h.b_tau);
  h.a_tau0 = j.value("a_tau0", h.a_tau0);
  h.b_tau0 = j.value("b_tau0", h.b_tau0);
  h.a_w = j.value("a_w", h.a_w);
  h.b_w = j.value("b_w", h.b_w);
  h.a_w0 = j.value("a_w0", h.a_w0);
  h.b_w0 = j.value("b_w0", h.b_w0);
  h.a_pi = j.value("a_pi", h.a_pi);
  h.b_pi = j.value("b_pi", h.b_pi);
  h.a_rho = j.value("a_rho", h.a_rho);
  h.b_rho = j.value("b_rho", h.b_rho);
  h.c = j.value("c", h.c);
  h.s = j.value("s", h.s);
  return h;
}

json vec_to_json(const VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

VectorXd vec_from_json(const json& a) {
  VectorXd v(a.size());
  for (size_t i = 0; i < a.size(); ++i) v(static_cast<Eigen::Index>(i)) = a[i].get<double>();
  return v;
}

}  // namespace

void write_dataset(const SurvivalDataset& ds, const fs::path& dir) {
  ds.validate();
  fs::create_directories(dir);
  json meta{{"format_version", 1},
            {"n", ds.n()},
            {"d", ds.d()},
            {"L", ds.L()},
            {"p", json::array()}};
  for (Eigen::Index l = 0; l < ds.L(); ++l) meta["p"].push_back(ds.p(l));
  write_text(dir / "meta.json", meta.dump(2) + "\n");

  {
    std::ostringstream os;
    os << "time,event";
    for (Eigen::Index k = 0; k < ds.d(); ++k) os << ",x0_" << (k + 1);
    os << "\n";
    for (Eigen::Index i = 0; i < ds.n(); ++i) {
      os << format_double(ds.time(i)) << "," << ds.event(i);
      for (Eigen::Index k = 0; k < ds.d(); ++k) os << "," << format_double(ds.clinical(i, k));
      os << "\n";
    }
    write_text(dir / "surv.csv", os.str());
  }
  for (Eigen::Index l = 0; l < ds.L(); ++l) {
    std::ostringstream os;
    for (Eigen::Index j = 0; j < ds.p(l); ++j) os << (j ? "," : "") << "x" << (j + 1);
    os << "\n";
    const auto& x = ds.cell_covariates[static_cast<size_t>(l)];
    for (Eigen::Index i = 0; i < ds.n(); ++i) {
      for (Eigen::Index j = 0; j < ds.p(l); ++j) os << (j ? "," : "") << format_double(x(i, j));
      os << "\n";
    }
    write_text(dir / ("X" + std::to_string(l + 1) + ".csv"), os.str());
  }
  {
    std::ostringstream os;
    for (Eigen::Index l = 0; l < ds.L(); ++l) os << (l ? "," : "") << "prop_" << (l + 1);
    os << "\n";
    for (Eigen::Index i = 0; i < ds.n(); ++i) {
      for (Eigen::Index l = 0; l < ds.L(); ++l) os << (l ? "," : "") << format_double(ds.proportions(i, l));
      os << "\n";
    }
    write_text(dir / "proportions.csv", os.str());
  }
}

SurvivalDataset read_dataset(const fs::path& dir) {
  std::vector<std::string> errs;
  json meta;
  try {
    meta = json::parse(read_text(dir / "meta.json"));
  } catch (const std::exception& e) {
    throw domain_error("cannot parse meta.json: " + std::string(e.what()));
  }
  const auto n = meta.at("n").get<Eigen::Index>();
  const auto d = meta.at("d").get<Eigen::Index>();
  const auto L = meta.at("L").get<Eigen::Index>();
  std::vector<Eigen::Index> ps;
  for (const auto& v : meta.at("p")) ps.push_back(v.get<Eigen::Index>());
  if (static_cast<Eigen::Index>(ps.size()) != L) errs.push_back("meta.json: p list length != L");

  SurvivalDataset ds;
  ds.time.resize(n);
  ds.event.resize(n);
  ds.clinical.resize(n, d);
  ds.proportions.resize(n, L);

  const Csv surv = read_csv(dir / "surv.csv");
  if (static_cast<Eigen::Index>(surv.rows.size()) != n)
    errs.push_back("surv.csv has " + std::to_string(surv.rows.size()) + " rows, expected " + std::to_string(n));
  if (static_cast<Eigen::Index>(surv.header.size()) != 2 + d)
    errs.push_back("surv.csv has " + std::to_string(surv.header.size()) + " columns, expected " +
                   std::to_string(2 + d) + " (time,event,clinical)");
  for (Eigen::Index i = 0; i < std::min<Eigen::Index>(n, static_cast<Eigen::Index>(surv.rows.size())); ++i) {
    const auto& row = surv.rows[static_cast<size_t>(i)];
    if (static_cast<Eigen::Index>(row.size()) != 2 + d) {
      errs.push_back("surv.csv row " + std::to_string(i + 1) + " has wrong column count");
      continue;
    }
    ds.time(i) = parse_double(row[0], "surv.csv column 'time'");
    ds.event(i) = static_cast<int>(parse_double(row[1], "surv.csv column 'event'"));
    for (Eigen::Index k = 0; k < d; ++k)
      ds.clinical(i, k) = parse_double(row[static_cast<size_t>(2 + k)],
                                       "surv.csv column 'x0_" + std::to_string(k + 1) + "'");
  }

  for (Eigen::Index l = 0; l < L; ++l) {
    const fs::path xpath = dir / ("X" + std::to_string(l + 1) + ".csv");
    if (!fs::exists(xpath)) {
      errs.push_back("missing cell-type block file X" + std::to_string(l + 1) + ".csv");
      ds.cell_covariates.emplace_back(MatrixXd::Zero(n, ps.empty() ? 0 : ps[static_cast<size_t>(l)]));
      continue;
    }
    const Csv x = read_csv(xpath);
    const Eigen::Index pl = ps[static_cast<size_t>(l)];
    MatrixXd m(n, pl);
    if (static_cast<Eigen::Index>(x.rows.size()) != n)
      errs.push_back("X" + std::to_string(l + 1) + ".csv has " + std::to_string(x.rows.size()) +
                     " rows, expected " + std::to_string(n));
    if (static_cast<Eigen::Index>(x.header.size()) != pl)
      errs.push_back("X" + std::to_string(l + 1) + ".csv has " + std::to_string(x.header.size()) +
                     " columns, expected " + std::to_string(pl));
    for (Eigen::Index i = 0; i < std::min<Eigen::Index>(n, static_cast<Eigen::Index>(x.rows.size())); ++i)
      for (Eigen::Index j = 0; j < std::min<Eigen::Index>(pl, static_cast<Eigen::Index>(
                                                                   x.rows[static_cast<size_t>(i)].size()));
           ++j)
        m(i, j) = parse_double(x.rows[static_cast<size_t>(i)][static_cast<size_t>(j)],
                               "X" + std::to_string(l + 1) + ".csv column " + std::to_string(j + 1));
    ds.cell_covariates.push_back(std::move(m));
  }

  const Csv props = read_csv(dir / "proportions.csv");
  if (static_cast<Eigen::Index>(props.rows.size()) != n)
    errs.push_back("proportions.csv has " + std::to_string(props.rows.size()) + " rows, expected " +
                   std::to_string(n));
  for (Eigen::Index i = 0; i < std::min<Eigen::Index>(n, static_cast<Eigen::Index>(props.rows.size())); ++i)
    for (Eigen::Index l = 0;
         l < std::min<Eigen::Index>(L, static_cast<Eigen::Index>(props.rows[static_cast<size_t>(i)].size()));
         ++l)
      ds.proportions(i, l) = parse_double(props.rows[static_cast<size_t>(i)][static_cast<size_t>(l)],
                                          "proportions.csv column " + std::to_string(l + 1));

  auto data_errs = ds.validation_errors();
  errs.insert(errs.end(), data_errs.begin(), data_errs.end());
  if (!errs.empty()) {
    std::string msg = "invalid dataset bundle at '" + dir.string() + "':";
    for (const auto& e : errs) msg += "\n  - " + e;
    throw domain_error(msg);
  }
  return ds;
}

void write_truth(const SimulationTruth& truth, const fs::path& path) {
  json j;
  j["xi0"] = truth.xi0;
  j["xi"] = vec_to_json(truth.xi);
  j["kappa"] = truth.kappa;
  j["zeta0"] = vec_to_json(truth.zeta0);
  j["beta"] = json::array();
  for (const auto& b : truth.beta) j["beta"].push_back(vec_to_json(b));
  j["zeta"] = json::array();
  for (const auto& z : truth.zeta) j["zeta"].push_back(vec_to_json(z));
  j["gamma_true"] = json::array();
  for (Eigen::Index i = 0; i < truth.gamma_true.size(); ++i) j["gamma_true"].push_back(truth.gamma_true(i));
  j["eta_true"] = json::array();
  for (Eigen::Index i = 0; i < truth.eta_true.size(); ++i) j["eta_true"].push_back(truth.eta_true(i));
  j["cured"] = json::array();
  for (Eigen::Index i = 0; i < truth.cured.size(); ++i) j["cured"].push_back(truth.cured(i));
  j["latent_time"] = json::array();
  for (Eigen::Index i = 0; i < truth.latent_time.size(); ++i) {
    if (std::isinf(truth.latent_time(i)))
      j["latent_time"].push_back(nullptr);
    else
      j["latent_time"].push_back(truth.latent_time(i));
  }
  j["underlying_p"] = json::array();
  for (Eigen::Index i = 0; i < truth.underlying_p.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index l = 0; l < truth.underlying_p.cols(); ++l) row.push_back(truth.underlying_p(i, l));
    j["underlying_p"].push_back(row);
  }
  j["cox_censor_rate"] = truth.cox_censor_rate;
  write_text(path, j.dump(2) + "\n");
}

SimulationTruth read_truth(const fs::path& path) {
  json j;
  try {
    j = json::parse(read_text(path));
  } catch (const std::exception& e) {
    throw domain_error("cannot parse truth file: " + std::string(e.what()));
  }
  SimulationTruth t;
  t.xi0 = j.at("xi0").get<double>();
  t.xi = vec_from_json(j.at("xi"));
  t.kappa = j.at("kappa").get<double>();
  t.zeta0 = vec_from_json(j.at("zeta0"));
  for (const auto& b : j.at("beta")) t.beta.push_back(vec_from_json(b));
  for (const auto& z : j.at("zeta")) t.zeta.push_back(vec_from_json(z));
  auto to_veci = [](const json& a) {
    VectorXi v(a.size());
    for (size_t i = 0; i < a.size(); ++i) v(static_cast<Eigen::Index>(i)) = a[i].get<int>();
    return v;
  };
  t.gamma_true = to_veci(j.at("gamma_true"));
  t.eta_true = to_veci(j.at("eta_true"));
  t.cured = to_veci(j.at("cured"));
  const auto& lt = j.at("latent_time");
  t.latent_time.resize(static_cast<Eigen::Index>(lt.size()));
  for (size_t i = 0; i < lt.size(); ++i)
    t.latent_time(static_cast<Eigen::Index>(i)) =
        lt[i].is_null() ? std::numeric_limits<double>::infinity() : lt[i].get<double>();
  const auto& up = j.at("underlying_p");
  if (!up.empty()) {
    t.underlying_p.resize(static_cast<Eigen::Index>(up.size()), static_cast<Eigen::Index>(up[0].size()));
    for (size_t i = 0; i < up.size(); ++i)
      for (size_t l = 0; l < up[i].size(); ++l)
        t.underlying_p(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(l)) = up[i][l].get<double>();
  }
  t.cox_censor_rate = j.value("cox_censor_rate", 0.0);
  return t;
}

void write_graph(const MrfGraph& graph, const fs::path& path) {
  json j{{"dim", graph.dim}, {"a", graph.a}, {"b", graph.b}, {"edges", json::array()}};
  for (size_t k = 0; k < graph.weight.size(); ++k)
    j["edges"].push_back(json::array({graph.edge_i[k], graph.edge_j[k], graph.weight[k]}));
  write_text(path, j.dump() + "\n");
}

MrfGraph read_graph(const fs::path& path) {
  json j;
  try {
    j = json::parse(read_text(path));
  } catch (const std::exception& e) {
    throw domain_error("cannot parse graph file: " + std::string(e.what()));
  }
  MrfGraph g;
  g.dim = j.at("dim").get<Eigen::Index>();
  g.a = j.at("a").get<double>();
  g.b = j.at("b").get<double>();
  for (const auto& e : j.at("edges"))
    g.add_edge(e[0].get<Eigen::Index>(), e[1].get<Eigen::Index>(), e[2].get<double>());
  g.finalize();
  return g;
}

// --- chain store ---------------------------------------------------------------

namespace {

json run_config_to_json(const RunConfig& cfg) {
  return json{{"n_iterations", cfg.n_iterations},
              {"n_warmup", cfg.n_warmup},
              {"thin", cfg.thin},
              {"n_chains", cfg.n_chains},
              {"seed", cfg.seed},
              {"threads", cfg.threads},
              {"prior_only", cfg.prior_only},
              {"record_pointwise", cfg.record_pointwise},
              {"record_pi_rho", cfg.record_pi_rho}};
}

RunConfig run_config_from_json(const json& j) {
  RunConfig cfg;
  cfg.n_iterations = j.value("n_iterations", cfg.n_iterations);
  cfg.n_warmup = j.value("n_warmup", cfg.n_warmup);
  cfg.thin = j.value("thin", cfg.thin);
  cfg.n_chains = j.value("n_chains", cfg.n_chains);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.threads = j.value("threads", cfg.threads);
  cfg.prior_only = j.value("prior_only", cfg.prior_only);
  cfg.record_pointwise = j.value("record_pointwise", cfg.record_pointwise);
  cfg.record_pi_rho = j.value("record_pi_rho", cfg.record_pi_rho);
  return cfg;
}

void write_block_csv(const fs::path& path, const std::vector<std::string>& cols,
                     const std::vector<const ChainOutput*>& chains, const RunConfig& cfg,
                     const std::function<double(const ParameterState&, const ChainOutput&, size_t,
                                                size_t)>& value) {
  std::ostringstream os;
  os << "chain,iteration";
  for (const auto& c : cols) os << "," << c;
  os << "\n";
  for (const auto* ch : chains) {
    for (size_t t = 0; t < ch->draws.size(); ++t) {
      const long iter = cfg.n_warmup + static_cast<long>(t) * cfg.thin + cfg.thin;
      os << ch->chain_id << "," << iter;
      for (size_t c = 0; c < cols.size(); ++c) os << "," << format_double(value(ch->draws[t], *ch, t, c));
      os << "\n";
    }
  }
  write_text(path, os.str());
}

}  // namespace

void write_chain_store(const FitResult& fit, const SurvivalDataset& data, const fs::path& dir,
                       const std::string& data_digest) {
  fs::create_directories(dir);
  const auto& cfg = fit.config;
  std::vector<const ChainOutput*> chains;
  for (const auto& ch : fit.chains) chains.push_back(&ch);
  const Eigen::Index L = data.L(), d = data.d();
  const bool meas = has_measurement_error(fit.spec.variant);
  const bool sel = has_selection(fit.spec.variant);

  {
    std::vector<std::string> cols{"loglik", "xi0", "kappa", "v2", "v02", "tau02"};
    if (meas) cols.push_back("w02");
    write_block_csv(dir / "chain_scalars.csv", cols, chains, cfg,
                    [&](const ParameterState& s, const ChainOutput& ch, size_t t, size_t c) {
                      switch (c) {
                        case 0: return ch.loglik[t];
                        case 1: return s.xi0;
                        case 2: return s.kappa;
                        case 3: return s.v2;
                        case 4: return s.v02;
                        case 5: return s.tau02;
                        default: return s.w02;
                      }
                    });
  }
  if (d > 0) {
    std::vector<std::string> cols;
    for (Eigen::Index k = 0; k < d; ++k) cols.push_back("xi_" + std::to_string(k + 1));
    write_block_csv(dir / "chain_xi.csv", cols, chains, cfg,
                    [](const ParameterState& s, const ChainOutput&, size_t, size_t c) {
                      return s.xi(static_cast<Eigen::Index>(c));
                    });
  }
  {
    std::vector<std::string> cols;
    for (Eigen::Index l = 0; l < L; ++l) cols.push_back("beta0_" + std::to_string(l + 1));
    write_block_csv(dir / "chain_beta0.csv", cols, chains, cfg,
                    [](const ParameterState& s, const ChainOutput&, size_t, size_t c) {
                      return s.beta0(static_cast<Eigen::Index>(c));
                    });
    for (Eigen::Index l = 0; l < L; ++l) cols[static_cast<size_t>(l)] = "tau2_" + std::to_string(l + 1);
    write_block_csv(dir / "chain_tau2.csv", cols, chains, cfg,
                    [](const ParameterState& s, const ChainOutput&, size_t, size_t c) {
                      return s.tau2(static_cast<Eigen::Index>(c));
                    });
  }

  auto flat_cols = [&](const char* stem) {
    std::vector<std::string> cols;
    for (Eigen::Index l = 0; l < L; ++l)
      for (Eigen::Index j = 0; j < data.p(l); ++j)
        cols.push_back(std::string(stem) + "_" + std::to_string(j + 1) + "_" + std::to_string(l + 1));
    return cols;
  };
  auto flat_lookup = [&](const ParameterState& s, size_t c, const auto& blocks) {
    Eigen::Index flat = static_cast<Eigen::Index>(c);
    for (Eigen::Index l = 0; l < L; ++l) {
      if (flat < data.p(l)) return static_cast<double>(blocks[static_cast<size_t>(l)](flat));
      flat -= data.p(l);
    }
    (void)s;
    throw domain_error("flat coefficient index out of range");
  };
  write_block_csv(dir / "chain_beta.csv", flat_cols("beta"), chains, cfg,
                  [&](const ParameterState& s, const ChainOutput&, size_t, size_t c) {
                    return flat_lookup(s, c, s.beta);
                  });
  if (sel)
    write_block_csv(dir / "chain_gamma.csv", flat_cols("gamma"), chains, cfg,
                    [&](const ParameterState& s, const ChainOutput&, size_t, size_t c) {
                      return flat_lookup(s, c, s.gamma);
                    });
  if (meas) {
    write_block_csv(dir / "chain_zeta.csv", flat_cols("zeta"), chains, cfg,
                    [&](const ParameterState& s, const ChainOutput&, size_t, size_t c) {
                      return flat_lookup(s, c, s.zeta);
                    });
    if (sel)
      write_block_csv(dir / "chain_eta.csv", flat_cols("eta"), chains, cfg,
                      [&](const ParameterState& s, const ChainOutput&, size_t, size_t c) {
                        return flat_lookup(s, c, s.eta);
                      });
    std::vector<std::string> cols;
    for (Eigen::Index l = 0; l < L; ++l) cols.push_back("zeta0_" + std::to_string(l + 1));
    write_block_csv(dir / "chain_zeta0.csv", cols, chains, cfg,
                    [](const ParameterState& s, const ChainOutput&, size_t, size_t c) {
                      return s.zeta0(static_cast<Eigen::Index>(c));
                    });
    for (Eigen::Index l = 0; l < L; ++l) cols[static_cast<size_t>(l)] = "w2_" + std::to_string(l + 1);
    write_block_csv(dir / "chain_w2.csv", cols, chains, cfg,
                    [](const ParameterState& s, const ChainOutput&, size_t, size_t c) {
                      return s.w2(static_cast<Eigen::Index>(c));
                    });
  }
  if (cfg.record_pointwise) {
    std::ostringstream os;
    os << "chain,iteration";
    for (Eigen::Index i = 0; i < data.n(); ++i) os << ",subject_" << (i + 1);
    os << "\n";
    for (const auto* ch : chains) {
      for (size_t t = 0; t < ch->draws.size(); ++t) {
        const long iter = cfg.n_warmup + static_cast<long>(t) * cfg.thin + cfg.thin;
        os << ch->chain_id << "," << iter;
        for (Eigen::Index i = 0; i < data.n(); ++i)
          os << "," << format_double(ch->pointwise_loglik(i, static_cast<Eigen::Index>(t)));
        os << "\n";
      }
    }
    write_text(dir / "pointwise_loglik.csv", os.str());
  }

  // manifest
  json manifest;
  manifest["kind"] = "gptcm_chain_store";
  manifest["version"] = 1;
  manifest["variant"] = to_string(fit.spec.variant);
  manifest["seed"] = cfg.seed;
  manifest["config"] = run_config_to_json(cfg);
  manifest["hyper"] = hyper_to_json(fit.spec.hyper);
  manifest["dims"] = {{"n", data.n()}, {"d", d}, {"L", L}, {"p", json::array()}};
  for (Eigen::Index l = 0; l < L; ++l) manifest["dims"]["p"].push_back(data.p(l));
  manifest["config_hash"] = fnv1a_hex(run_config_to_json(cfg).dump() + to_string(fit.spec.variant) +
                                      hyper_to_json(fit.spec.hyper).dump());
  if (!data_digest.empty()) manifest["input_digest"] = data_digest;
  if (fit.spec.graph_beta) {
    write_graph(*fit.spec.graph_beta, dir / "graph_beta.json");
    manifest["graph_beta"] = "graph_beta.json";
  }
  if (fit.spec.graph_zeta) {
    write_graph(*fit.spec.graph_zeta, dir / "graph_zeta.json");
    manifest["graph_zeta"] = "graph_zeta.json";
  }
  manifest["converged"] = fit.converged;
  if (!fit.failure.empty()) manifest["failure"] = fit.failure;
  json stats = json::object();
  double wall = 0.0;
  long clamps = 0, incidents = 0;
  for (const auto& ch : fit.chains) {
    wall += ch.wall_seconds;
    clamps += ch.clamp_count;
    incidents += ch.incident_count;
  }
  stats["wall_seconds"] = wall;
  stats["clamp_count"] = clamps;
  stats["incident_count"] = incidents;
  json accept = json::object();
  for (const auto& ch : fit.chains)
    for (const auto& [name, diag] : ch.diagnostics) {
      accept[name] = {{"proposals", diag.proposals}, {"acceptances", diag.acceptances}};
    }
  stats["samplers"] = accept;
  manifest["stats"] = stats;
  json rhat = json::object(), ess = json::object();
  for (const auto& [k, v] : fit.rhat) rhat[k] = v;
  for (const auto& [k, v] : fit.ess) ess[k] = v;
  manifest["rhat"] = rhat;
  manifest["ess"] = ess;
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");
}

FitResult read_chain_store(const fs::path& dir) {
  json manifest;
  try {
    manifest = json::parse(read_text(dir / "manifest.json"));
  } catch (const std::exception& e) {
    throw domain_error("cannot parse manifest.json: " + std::string(e.what()));
  }
  FitResult fit;
  fit.spec.variant = variant_from_string(manifest.at("variant").get<std::string>());
  fit.spec.hyper = hyper_from_json(manifest.at("hyper"));
  fit.config = run_config_from_json(manifest.at("config"));
  if (fs::exists(dir / "graph_beta.json")) fit.spec.graph_beta = read_graph(dir / "graph_beta.json");
  if (fs::exists(dir / "graph_zeta.json")) fit.spec.graph_zeta = read_graph(dir / "graph_zeta.json");
  fit.converged = manifest.value("converged", true);

  const auto& dims = manifest.at("dims");
  const auto d = dims.at("d").get<Eigen::Index>();
  const auto L = dims.at("L").get<Eigen::Index>();
  std::vector<Eigen::Index> ps;
  for (const auto& v : dims.at("p")) ps.push_back(v.get<Eigen::Index>());

  const bool meas = has_measurement_error(fit.spec.variant);
  const bool sel = has_selection(fit.spec.variant);

  const Csv scalars = read_csv(dir / "chain_scalars.csv");
  const Csv xi = d > 0 ? read_csv(dir / "chain_xi.csv") : Csv{};
  const Csv beta0 = read_csv(dir / "chain_beta0.csv");
  const Csv tau2 = read_csv(dir / "chain_tau2.csv");
  const Csv beta = read_csv(dir / "chain_beta.csv");
  const Csv gamma = sel ? read_csv(dir / "chain_gamma.csv") : Csv{};
  const Csv zeta = meas ? read_csv(dir / "chain_zeta.csv") : Csv{};
  const Csv eta = (meas && sel) ? read_csv(dir / "chain_eta.csv") : Csv{};
  const Csv zeta0 = meas ? read_csv(dir / "chain_zeta0.csv") : Csv{};
  const Csv w2 = meas ? read_csv(dir / "chain_w2.csv") : Csv{};

  std::map<int, ChainOutput> by_chain;
  for (size_t r = 0; r < scalars.rows.size(); ++r) {
    const int chain = static_cast<int>(parse_double(scalars.rows[r][0], "chain_scalars.csv 'chain'"));
    auto& ch = by_chain[chain];
    ch.chain_id = chain;
    ParameterState s = ParameterState::zeros(d, ps);
    auto cell = [&](const Csv& csv, size_t col) {
      return parse_double(csv.rows[r][col + 2], "chain store column " + std::to_string(col));
    };
    ch.loglik.push_back(cell(scalars, 0));
    s.xi0 = cell(scalars, 1);
    s.kappa = cell(scalars, 2);
    s.v2 = cell(scalars, 3);
    s.v02 = cell(scalars, 4);
    s.tau02 = cell(scalars, 5);
    if (meas) s.w02 = cell(scalars, 6);
    for (Eigen::Index k = 0; k < d; ++k) s.xi(k) = cell(xi, static_cast<size_t>(k));
    for (Eigen::Index l = 0; l < L; ++l) {
      s.beta0(l) = cell(beta0, static_cast<size_t>(l));
      s.tau2(l) = cell(tau2, static_cast<size_t>(l));
      if (meas) {
        s.zeta0(l) = cell(zeta0, static_cast<size_t>(l));
        s.w2(l) = cell(w2, static_cast<size_t>(l));
      }
    }
    size_t flat = 0;
    for (Eigen::Index l = 0; l < L; ++l) {
      const auto sl = static_cast<size_t>(l);
      for (Eigen::Index j = 0; j < ps[sl]; ++j, ++flat) {
        s.beta[sl](j) = cell(beta, flat);
        if (sel) s.gamma[sl](j) = static_cast<int>(cell(gamma, flat));
        if (meas) {
          s.zeta[sl](j) = cell(zeta, flat);
          if (sel) s.eta[sl](j) = static_cast<int>(cell(eta, flat));
        }
      }
    }
    by_chain[chain].draws.push_back(std::move(s));
  }
  for (auto& [id, ch] : by_chain) fit.chains.push_back(std::move(ch));
  // NaN diagnostics (flagged values) serialize as null
  const json rhat_json = manifest.value("rhat", json::object());
  const json ess_json = manifest.value("ess", json::object());
  for (const auto& [k, v] : rhat_json.items())
    fit.rhat[k] = v.is_number() ? v.get<double>() : std::numeric_limits<double>::quiet_NaN();
  for (const auto& [k, v] : ess_json.items())
    fit.ess[k] = v.is_number() ? v.get<double>() : std::numeric_limits<double>::quiet_NaN();
  return fit;
}

void write_summary(const PosteriorSummary& summary, const FitResult& fit, const fs::path& dir) {
  fs::create_directories(dir);
  {
    std::ostringstream os;
    os << "parameter,mean,sd,q025,q975,rhat,ess\n";
    for (const auto& [name, sc] : summary.scalars) {
      os << name << "," << format_double(sc.mean) << "," << format_double(sc.sd) << ","
         << format_double(sc.q025) << "," << format_double(sc.q975);
      os << "," << (fit.rhat.count(name) ? format_double(fit.rhat.at(name)) : "");
      os << "," << (fit.ess.count(name) ? format_double(fit.ess.at(name)) : "");
      os << "\n";
    }
    write_text(dir / "summary_scalars.csv", os.str());
  }
  {
    // flat (j, l) names follow the chain-store column convention
    std::vector<std::string> suffix;
    if (!fit.chains.empty() && !fit.chains.front().draws.empty()) {
      const auto& first = fit.chains.front().draws.front();
      for (Eigen::Index l = 0; l < first.L(); ++l)
        for (Eigen::Index j = 0; j < first.beta[static_cast<size_t>(l)].size(); ++j)
          suffix.push_back("_" + std::to_string(j + 1) + "_" + std::to_string(l + 1));
    } else {
      for (Eigen::Index k = 0; k < summary.beta_mean.size(); ++k)
        suffix.push_back("_" + std::to_string(k + 1));
    }
    std::ostringstream os;
    os << "parameter,mean,sd,q025,q975,mpip,mpm,mpm_estimate\n";
    auto emit = [&](const char* stem, const VectorXd& mean, const VectorXd& sd, const VectorXd& q025,
                    const VectorXd& q975, const VectorXd& mpip, const VectorXi& mpm,
                    const VectorXd& est) {
      for (Eigen::Index k = 0; k < mean.size(); ++k) {
        os << stem << suffix[static_cast<size_t>(k)] << "," << format_double(mean(k)) << ","
           << format_double(sd(k)) << "," << format_double(q025(k)) << "," << format_double(q975(k));
        if (summary.has_selection)
          os << "," << format_double(mpip(k)) << "," << mpm(k) << "," << format_double(est(k));
        else
          os << ",,," << format_double(est(k));
        os << "\n";
      }
    };
    emit("beta", summary.beta_mean, summary.beta_sd, summary.beta_q025, summary.beta_q975,
         summary.mpip_gamma, summary.mpm_gamma, summary.beta_mpm);
    if (summary.has_measurement_error)
      emit("zeta", summary.zeta_mean, summary.zeta_sd, summary.zeta_q025, summary.zeta_q975,
           summary.mpip_eta, summary.mpm_eta, summary.zeta_mpm);
    write_text(dir / "summary_coefficients.csv", os.str());
  }
  json meta{{"n_draws", summary.n_draws},
            {"clamp_count", summary.clamp_count},
            {"incident_count", summary.incident_count},
            {"variant", to_string(fit.spec.variant)}};
  write_text(dir / "summary_meta.json", meta.dump(2) + "\n");
}

void write_prediction(const PredictionCurve& pred, const fs::path& path) {
  std::ostringstream os;
  os << "subject,time,survival\n";
  for (Eigen::Index i = 0; i < pred.surv.rows(); ++i)
    for (Eigen::Index g = 0; g < pred.grid.size(); ++g)
      os << (i + 1) << "," << format_double(pred.grid(g)) << "," << format_double(pred.surv(i, g)) << "\n";
  write_text(path, os.str());
}

void write_brier(const std::vector<std::pair<std::string, BrierResult>>& results, const fs::path& path) {
  if (results.empty()) throw domain_error("write_brier: nothing to write");
  std::ostringstream os;
  os << "time";
  for (const auto& [name, r] : results) os << ",bs_" << name;
  os << ",unreliable\n";
  const auto& grid = results.front().second.grid;
  for (Eigen::Index g = 0; g < grid.size(); ++g) {
    os << format_double(grid(g));
    bool unreliable = false;
    for (const auto& [name, r] : results) {
      os << "," << format_double(r.score(g));
      unreliable = unreliable || r.unreliable[static_cast<size_t>(g)];
    }
    os << "," << (unreliable ? 1 : 0) << "\n";
  }
  write_text(path, os.str());
}

}  // namespace gptcm::io
