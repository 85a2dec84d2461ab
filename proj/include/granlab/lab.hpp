#pragma once

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "granlab/config.hpp"
#include "granlab/data.hpp"
#include "granlab/network.hpp"
#include "granlab/probes.hpp"
#include "granlab/sgd.hpp"

namespace granlab {

// Everything one run produces, before anything is written to disk.
struct RunOutputs {
  LabConfig cfg;
  FeatureDictionary dict;
  Network net0;
  std::optional<Network> net_T0;
  Network final_net;
  NeuronSets sets;
  Trajectory trajectory;
  RunLog log;
  // Per-step update coherence over the first `coherence_steps` steps.
  std::vector<CoherenceStep> coherence;
  ErrorReport errors;
  RatioProfile ratios;
  std::optional<LogFitResult> log_fit;
  std::string log_fit_note;
  double seconds = 0.0;
};

// Seeds derived from cfg.seed. The data seed does not depend on granularity.
std::uint64_t data_seed_of(const ExperimentConfig& cfg);
std::uint64_t init_seed_of(const ExperimentConfig& cfg, Granularity g);
std::uint64_t eval_seed_of(const ExperimentConfig& cfg);

// Trains under cfg.training and runs all probes. Throws TrainingAborted.
RunOutputs execute_run(const LabConfig& cfg, long coherence_steps = 200);

// Writes the run directory; manifest.json is written last.
void write_run(const RunOutputs& run, const std::filesystem::path& out_dir);

std::string sha256_file(const std::filesystem::path& path);

// Checks every manifest entry against the file on disk. Returns the list of
// problems; empty means the run directory is complete.
std::vector<std::string> verify_manifest(const std::filesystem::path& out_dir);

// Exit codes: 0 success, 1 invalid or unreadable config, 2 training aborted.
int cmd_run(const std::string& config_path, const std::filesystem::path& out_dir, std::ostream& log);

enum class SweepAxis { K, SigmaZeta, SStar };
SweepAxis sweep_axis_from_string(std::string_view s);
std::string to_string(SweepAxis axis);

// One sub-run per value and granularity, both granularities on the same data
// seed, plus summary.csv. Returns the number of failed sub-runs (capped at 125).
int cmd_sweep(const std::string& config_path, SweepAxis axis, const std::vector<double>& values,
              const std::filesystem::path& out_dir, std::ostream& log);

// Applies one sweep value to a config.
LabConfig sweep_config(const LabConfig& base, SweepAxis axis, double value, Granularity g);

// Worker count from GRANLAB_THREADS, default 1.
int worker_threads();

int cmd_preset(const std::string& name, const std::string& emit_path, std::ostream& log);

}  // namespace granlab
