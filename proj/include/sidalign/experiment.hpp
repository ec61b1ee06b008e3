#pragma once

#include "sidalign/harness.hpp"
#include "sidalign/simulate.hpp"

#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

namespace sidalign {

/// Flat "section.key" -> value view of a config file.
using ConfigEntries = std::map<std::string, std::string>;

/// Parses INI/TOML-style text ([section] headers, key = value, '#' or ';'
/// comments, quoted strings, flat [a, b] lists).
ConfigEntries parse_config_text(const std::string& text);
/// Parses a JSON object of sections, each an object of scalars or scalar arrays.
ConfigEntries parse_config_json(const std::string& text);
/// Picks the parser by extension (.json, anything else is INI/TOML).
ConfigEntries load_config_file(const std::filesystem::path& path);
/// Applies "section.key=value" overrides.
void apply_overrides(ConfigEntries& entries, const std::vector<std::string>& overrides);

struct ExperimentConfig {
  /// Simulated data unless `events_path` is set.
  std::string preset = "benchmark-default";
  SimulationParams simulation = simulation_preset("benchmark-default");
  std::string events_path;
  /// Directory holding window_KK.bin embeddings for the external event log.
  std::string embeddings_dir;
  std::size_t num_blocks = 10;
  bool five_core = true;

  PolicyConfig eval;
  /// When set, finetune passes are chosen per seed by select_passes over `pilot_passes`.
  bool pilot = false;
  std::vector<double> pilot_passes{0.5, 1.0, 2.0};
  std::vector<Policy> policies = all_policies();
  bool rolling = true;
  RollingOptions rolling_options;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};

  /// Throws ValidationError on unknown keys or malformed values.
  static ExperimentConfig from_entries(const ConfigEntries& entries);
  ConfigEntries to_entries() const;
  /// Canonical INI text; parse_config_text(to_text()) round-trips.
  std::string to_text() const;
};

/// Simulated world reduced to the 5-core log, its blocks and per-window embeddings.
ExperimentData simulated_data(const SimulationParams& params, std::size_t num_blocks, bool five_core);
/// Blocks from an event log plus window_KK.bin embeddings from `embeddings_dir`.
ExperimentData file_data(const std::filesystem::path& events, const std::filesystem::path& embeddings_dir,
                         std::size_t num_blocks, bool five_core);

using ProgressFn = std::function<void(const std::string&)>;

/// Runs every configured policy (and the rolling series when enabled) for each seed.
EvalReport run_experiment(const ExperimentConfig& config, const ProgressFn& progress = {});

/// Embeddings for the window ending at `last_block`, restricted to items of blocks 1..last_block.
ItemEmbeddingTable window_table(const SimulatedWorld& world, const TemporalBlocks& blocks, std::size_t last_block);

}  // namespace sidalign
