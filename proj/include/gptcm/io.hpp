#pragma once

#include <filesystem>
#include <string>

#include "gptcm/evaluation.hpp"
#include "gptcm/mcmc.hpp"
#include "gptcm/simulation.hpp"

namespace gptcm::io {

namespace fs = std::filesystem;

/// FNV-1a 64-bit digest, as 16 hex characters.
std::string fnv1a_hex(const std::string& bytes);
std::string file_digest(const fs::path& path);

// --- dataset bundle ----------------------------------------------------------
// Layout: meta.json, surv.csv (time,event,clinical), X1.csv..XL.csv,
// proportions.csv; decimals carry 17 significant digits so round trips are
// lossless.

void write_dataset(const SurvivalDataset& ds, const fs::path& dir);
SurvivalDataset read_dataset(const fs::path& dir);

void write_truth(const SimulationTruth& truth, const fs::path& path);
SimulationTruth read_truth(const fs::path& path);

void write_graph(const MrfGraph& graph, const fs::path& path);
MrfGraph read_graph(const fs::path& path);

// --- chain store ---------------------------------------------------------------
// Columnar CSVs (one per parameter block) with chain and iteration index
// columns, plus manifest.json capturing the spec, run config and digests.

void write_chain_store(const FitResult& fit, const SurvivalDataset& data, const fs::path& dir,
                       const std::string& data_digest = "");
FitResult read_chain_store(const fs::path& dir);

void write_summary(const PosteriorSummary& summary, const FitResult& fit, const fs::path& dir);

void write_prediction(const PredictionCurve& pred, const fs::path& path);
void write_brier(const std::vector<std::pair<std::string, BrierResult>>& results, const fs::path& path);

std::string format_double(double v);  // %.17g, canonical for all files

}  // namespace gptcm::io
