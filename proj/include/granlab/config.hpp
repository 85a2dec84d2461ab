#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace granlab {

// Every scalar hyperparameter of the data model, the learner and the schedule.
// Field names double as the JSON keys.
struct ExperimentConfig {
  int d = 128;
  int P = 64;
  int k_plus = 8;
  int k_minus = 8;
  int s_star = 4;
  int s_dagger = 2;
  double iota = 0.05;
  double iota_dag_lower = 0.08;
  double iota_dag_upper = 0.16;
  double sigma_zeta = 0.02;
  double sigma_zeta_star = 0.3;
  double sigma_0 = 0.01;
  double c_0 = 0.05;
  double c_b_coarse = 2.0248456731316584;  // sqrt(4 + 2 c_0)
  double c_b_fine = 1.4491376746189437;    // sqrt(2 + 2 c_0)
  double eta = 0.5;
  int N = 320;
  int m = 1024;
  int m_sub = 256;
  double bias_decay_divisor = 20.0;
  std::uint64_t seed = 1;

  bool operator==(const ExperimentConfig&) const = default;
};

enum class Granularity { Coarse, Fine };

enum class DictionaryMode { StandardBasis, RandomOrthonormal };

enum class StopKind { MaxSteps, AtT0, AtT11PlusBudget };

struct StopRule {
  StopKind kind = StopKind::MaxSteps;
  // MaxSteps: number of steps. AtT0: cap when T0 never fires.
  // AtT11PlusBudget: cap when T11 never fires.
  long max_steps = 3000;
  // Extra steps after T11 for AtT11PlusBudget.
  long budget = 0;

  static StopRule steps(long n) { return {StopKind::MaxSteps, n, 0}; }
  static StopRule at_t0(long cap) { return {StopKind::AtT0, cap, 0}; }
  static StopRule at_t11_plus(long budget, long cap) {
    return {StopKind::AtT11PlusBudget, cap, budget};
  }
  bool operator==(const StopRule&) const = default;
};

// The "training" object of the JSON config: schedule, probes and evaluation.
struct TrainingOptions {
  Granularity granularity = Granularity::Coarse;
  StopRule stop = StopRule::steps(3000);
  long probe_every = 10;
  double eps_loss = 0.05;
  double t0_threshold_fine = 0.4;  // B
  // Negative means "0.1 * log(d)".
  double tau = -1.0;
  DictionaryMode dictionary = DictionaryMode::StandardBasis;
  bool screen_all_directions = false;
  long eval_easy = 4000;
  long eval_hard = 4000;

  double resolved_tau(int d) const;
  bool operator==(const TrainingOptions&) const = default;
};

struct LabConfig {
  ExperimentConfig experiment;
  TrainingOptions training;
  bool operator==(const LabConfig&) const = default;
};

enum class Severity { Warning, Error };

struct ValidationIssue {
  Severity severity;
  std::string field;
  std::string message;
};

struct ValidationReport {
  std::vector<ValidationIssue> issues;

  bool ok() const;
  std::size_t error_count() const;
  std::size_t warning_count() const;
  bool has(Severity severity, std::string_view needle) const;
  std::string to_string() const;
};

// Hard invariants are errors; asymptotic-regime conditions that fail at desk
// scale are warnings.
ValidationReport validate_config(const ExperimentConfig& cfg);

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

nlohmann::json to_json(const ExperimentConfig& cfg);
nlohmann::json to_json(const TrainingOptions& opts);
nlohmann::json to_json(const LabConfig& cfg);

// Unknown keys, missing keys and wrong types throw ConfigError.
ExperimentConfig experiment_from_json(const nlohmann::json& j);
TrainingOptions training_from_json(const nlohmann::json& j);
// Accepts the flat experiment document with an optional "training" object.
LabConfig lab_config_from_json(const nlohmann::json& j);

LabConfig load_lab_config(const std::string& path);
void save_lab_config(const LabConfig& cfg, const std::string& path);

// Reference desk-scale values.
LabConfig desk_preset();
// Asymptotic parameter choices evaluated at a given d.
LabConfig paper_asymptotic_preset(int d = 128);
// Throws ConfigError for unknown names.
LabConfig preset(std::string_view name);

// 64-bit FNV-1a over the canonical JSON dump; used to tie snapshots to configs.
std::uint64_t config_hash(const LabConfig& cfg);

std::string to_string(Granularity g);
Granularity granularity_from_string(std::string_view s);

}  // namespace granlab
