#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "unirep/config.hpp"
#include "unirep/pipeline.hpp"

namespace unirep {

// One sweep cell: a name plus dotted-key overrides applied to the base config.
struct AblationCell {
  std::string name;
  nlohmann::json overrides = nlohmann::json::object();
};

struct SweepSpec {
  std::vector<AblationCell> cells;
  std::vector<std::uint64_t> seeds;
};

// Built-in sweeps: "loss" (7 fine/coarse/cujp toggles), "jigsaw", "codebook", "mask".
std::vector<AblationCell> preset_cells(const std::string& name);
std::vector<std::string> preset_names();

// {"preset": "loss"} or {"cells": [{"name": ..., "overrides": {...}}]}, plus
// optional "seeds": [...] (defaults to 5 seeds starting at the base seed).
SweepSpec parse_sweep(const nlohmann::json& j, std::uint64_t base_seed);

struct AblationRow {
  std::string cell;
  std::uint64_t seed = 0;
  std::string status;  // "ok", "skipped" or "failed"
  std::string reason;
  std::optional<EvalReport> report;

  std::string csv_row() const;
};

std::string ablation_csv_header();

// Runs every (cell, seed) pair, writing a per-cell temp CSV under
// `out_dir/cells/` as each finishes, then merges them into
// `out_dir/ablation.csv` keyed by (cell, seed). Rows already in the CSV for
// other keys are kept. `threads` = 0 uses UNIREP_THREADS or the core count.
std::vector<AblationRow> run_ablation(const RunConfig& base, const SweepSpec& sweep,
                                      const std::filesystem::path& out_dir, std::size_t threads = 0,
                                      const std::function<void(const AblationRow&)>& on_row = {});

// Merges every per-cell CSV under `out_dir/cells/` into `out_dir/ablation.csv`.
void merge_ablation(const std::filesystem::path& out_dir);

// Worker count: UNIREP_THREADS if set and positive, else the hardware count.
std::size_t worker_threads();

// Mean HOS per cell over rows that completed with an unknown split.
std::map<std::string, double> mean_hos(const std::vector<AblationRow>& rows);

}  // namespace unirep
