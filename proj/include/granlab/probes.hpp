#pragma once

#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "granlab/config.hpp"
#include "granlab/data.hpp"
#include "granlab/network.hpp"
#include "granlab/sgd.hpp"

namespace granlab {

inline constexpr int kSchemaVersion = 1;

// Initialization-time neuron sets. For class c and assigned feature v:
//   S*(c,v): <w0, v> >= upper and every other screened feature < lower
//   S(c,v):  <w0, v> >= lower
//   U(c,r):  features with <w0, v> >= lower
// with upper/lower = sigma_0 c_b sqrt(log d +- tau).
struct NeuronSets {
  Granularity granularity = Granularity::Coarse;
  double tau = 0.0;
  double upper = 0.0;
  double lower = 0.0;
  bool screen_all_directions = false;
  std::vector<ClassId> classes;
  std::vector<FeatureRole> roles;
  // [class][role] -> global neuron indices, ascending.
  std::vector<std::vector<std::vector<int>>> s_star;
  std::vector<std::vector<std::vector<int>>> s;
  // [neuron] -> role indices above the lower threshold.
  std::vector<std::vector<int>> u;

  int class_count() const { return static_cast<int>(classes.size()); }
  int role_count() const { return static_cast<int>(roles.size()); }
  int role_index(const FeatureRole& role) const;
};

// screen_all_directions also applies the exclusion clause to the unassigned
// dictionary directions.
NeuronSets identify_neuron_sets(const Network& net0, const FeatureDictionary& dict,
                                const ExperimentConfig& cfg, double tau,
                                bool screen_all_directions = false);

// Mean projection over S*(c,v); empty sets give nullopt. Indexed [class][role].
using FeatureProjections = std::vector<std::vector<std::optional<double>>>;
FeatureProjections project_features(const Network& net, const FeatureDictionary& dict,
                                    const NeuronSets& sets);

// Max over member pairs of |dw_r - dw_r'| / max(|dw_r|, eps), per nonempty
// channel with at least two members. Zero updates give 0.
struct CoherenceStep {
  long step = 0;
  std::vector<std::optional<double>> channel;  // flattened [class * roles + role]
  double worst() const;
};

CoherenceStep check_update_coherence(const UpdateRecord& update, const NeuronSets& sets);
// Same measure on cumulative displacement w_r - w_r^0.
CoherenceStep cumulative_drift(const Network& net, const Network& net0, const NeuronSets& sets);

// Flattened channel indices (c, v) where v is the common feature of class c's
// own superclass: the detectors whose updates the phase-I analysis pins down.
std::vector<std::size_t> on_diagonal_common_channels(const NeuronSets& sets);

// Median over all (step, channel) values, optionally restricted to `channels`.
double median_coherence(const std::vector<CoherenceStep>& steps);
double median_coherence(const std::vector<CoherenceStep>& steps, const std::vector<std::size_t>& channels);

struct NonactivationReport {
  long feature_events = 0;  // (neuron outside S(c,v), v-dominated patch) pairs
  long feature_violations = 0;
  long noise_events = 0;  // (neuron, pure-noise patch) pairs
  long noise_violations = 0;

  double feature_rate() const;
  double noise_rate() const;
};

NonactivationReport nonactivation_diagnostic(const Network& net, const FeatureDictionary& dict,
                                             const NeuronSets& sets,
                                             const std::vector<Sample>& probe_samples);

// Trajectory of probe channels. A channels exist only for nonempty S* sets.
enum class ChannelKind { A, Bias, Loss, Logit };
std::string to_string(ChannelKind kind);

struct Channel {
  ChannelKind kind;
  std::string cls;
  std::string feature_role;
  std::vector<long> steps;
  std::vector<double> values;
};

struct Trajectory {
  std::vector<Channel> channels;

  const Channel* find(ChannelKind kind, const std::string& cls, const std::string& role = "") const;
  Channel& get_or_add(ChannelKind kind, const std::string& cls, const std::string& role = "");
};

// Records A and mean-bias channels at every probe, and loss and
// min true-class logit at every step.
class TrajectoryRecorder {
 public:
  TrajectoryRecorder(const FeatureDictionary& dict, NeuronSets sets);

  void probe(const TrainState& state);
  void step(const StepView& view);
  // Hooks that call probe/step; `extra` hooks run afterwards.
  ProbeHooks hooks(long cadence, ProbeHooks extra = {});

  const Trajectory& trajectory() const { return traj_; }
  const NeuronSets& sets() const { return sets_; }

 private:
  const FeatureDictionary& dict_;
  NeuronSets sets_;
  Trajectory traj_;
  long last_probe_ = -1;
};

// step,channel_kind,class,feature_role,value rows ordered by step, then channel.
void write_trajectory_csv(const Trajectory& traj, std::ostream& out);
void write_trajectory_csv(const Trajectory& traj, const std::string& path);

class FitDegenerate : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct LogFitResult {
  double C = 0.0;
  double t0 = 0.0;
  double a = 0.0;
  double b = 0.0;
  double r_squared = 0.0;
  double residual_max = 0.0;
  long T11 = 0;
  long points = 0;
};

// Least squares of a log(C (t - T11) + t0) + b over (a, b, t0) with
// C = eta s* / (2 k+ P); uses points with t >= T11. Needs at least 20 points.
LogFitResult fit_log_growth(const std::vector<long>& steps, const std::vector<double>& values,
                            long T11, const ExperimentConfig& cfg);
LogFitResult fit_log_growth(const Channel& channel, long T11, const ExperimentConfig& cfg);
// The same fit with C given directly.
LogFitResult fit_log_growth(const std::vector<long>& steps, const std::vector<double>& values,
                            long T11, double C);

// A_fine / A_common per subclass on the subclass's own class (the superclass
// class for coarse nets).
struct RatioSeries {
  std::string cls;
  std::string fine_role;
  std::vector<long> steps;
  std::vector<double> ratio;
  std::vector<double> delta_ratio;  // (A_fine - A_fine(0)) / (A_common - A_common(0))
  std::vector<bool> flagged;        // denominator below eps
};

struct RatioProfile {
  std::vector<RatioSeries> series;
  double end_ratio = 0.0;  // mean over subclasses of the last ratio
  double end_delta_ratio = 0.0;
  int subclasses = 0;
};

RatioProfile ratio_profile(const Trajectory& traj, const NeuronSets& sets);

struct RateEstimate {
  long mistakes = 0;
  long count = 0;
  double rate = 0.0;
  double lo = 0.0;  // Wilson 95%
  double hi = 0.0;
};

RateEstimate make_rate(long mistakes, long count);

struct ErrorReport {
  Granularity granularity = Granularity::Coarse;
  RateEstimate easy;
  RateEstimate hard;
  // [truth][predicted], index 0 = "+", 1 = "-".
  long easy_confusion[2][2] = {{0, 0}, {0, 0}};
  long hard_confusion[2][2] = {{0, 0}, {0, 0}};
  // Fine nets only: subclass argmax accuracy on easy samples (diagnostic).
  std::optional<double> easy_subclass_accuracy;

  double easy_error() const { return easy.rate; }
  double hard_error() const { return hard.rate; }
};

// Fresh samples cycling through the subclasses in order, so each subclass
// gets an equal share. Binary prediction via the network's own head.
ErrorReport evaluate_error(const Network& net, const ExperimentConfig& cfg, const FeatureDictionary& dict,
                           long n_easy, long n_hard, Rng& rng);

nlohmann::json to_json(const NeuronSets& sets);
nlohmann::json to_json(const ErrorReport& report);
nlohmann::json to_json(const LogFitResult& fit);
nlohmann::json to_json(const RatioProfile& profile);

}  // namespace granlab
