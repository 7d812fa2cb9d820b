#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mrtherm/recon.hpp"
#include "mrtherm/sampling.hpp"

namespace mrtherm {

struct ExperimentConfig {
  Phantom phantom;
  MrProtocol protocol;
  std::vector<double> true_mu;             // resolved from the config (explicit or sampled)
  double fusion_time_s = 0.0;
  std::vector<double> output_times_s;      // always contains fusion_time_s
  std::vector<std::string> methods;        // subset of {maxvar, rectilinear, poisson}
  std::vector<int> line_counts;
  double snr = 50.0;
  std::uint64_t master_seed = 0;
  int noise_realizations = 1;
  int nodes_per_dim = 3;
  int readout_axis = 0;
  int separation = 1;
  PoissonDiskParams poisson;
  std::optional<IndexBox> roi;
  double dt_s = 0.0;
  int recon_std_nodes_per_dim = 0; // 0 disables posterior temperature std fields
  std::string out_dir;
};

/// Parses and validates the experiment JSON (which references or embeds the
/// phantom config). Flags override out_dir / methods / lines / seed later.
ExperimentConfig load_experiment_config(const std::string& path);
ExperimentConfig parse_experiment_config(const nlohmann::json& j,
                                         const std::string& base_dir);

struct ExperimentRecord {
  std::string method;
  int lines = 0;
  int seed_index = 0;
  ParameterStats prior;
  ParameterStats posterior;
  ErrorReport error;
  double undersampling_fraction = 0.0;
  double wall_ms = 0.0;
  bool clamped = false;
  std::string error_tag; // empty on success
};

/// Synthesizes the ground truth, propagates the prior ensemble, builds the
/// per-method patterns, fuses every (method, line count, noise seed) cell and
/// reconstructs. A failing cell is recorded with its error tag; the others
/// continue. Artifacts are written under config.out_dir when set.
std::vector<ExperimentRecord> run_experiment(const ExperimentConfig& config);

/// Deterministic report.csv (method, lines, seed, status, rmse, max error,
/// posterior trace, undersampling fraction), wall-clock timings.csv and a
/// plain-text summary. report.csv bytes depend only on (config, seeds).
void export_report(const std::vector<ExperimentRecord>& records, const std::string& out_dir);

/// Serialization of records for the `report` subcommand.
void write_records_jsonl(const std::vector<ExperimentRecord>& records, const std::string& path);
std::vector<ExperimentRecord> read_records_jsonl(const std::string& path);

} // namespace mrtherm
