#pragma once

#include <functional>
#include <optional>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "granlab/config.hpp"
#include "granlab/data.hpp"
#include "granlab/network.hpp"
#include "granlab/rng.hpp"

namespace granlab {

// N easy samples with exactly N / (2 k+) samples per subclass, shuffled.
struct Batch {
  std::vector<Sample> samples;
  std::vector<Sign> labels_coarse;
  std::vector<SubclassLabel> labels_fine;
  RowMatrix stacked;  // all patches, sample n at rows [n P, (n+1) P)

  int size() const { return static_cast<int>(samples.size()); }
};

class BatchError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

Batch make_batch(const ExperimentConfig& cfg, const FeatureDictionary& dict, Rng& rng);
// Assembles a batch from existing samples.
Batch batch_from_samples(std::vector<Sample> samples);

// Per-class target index of each batch sample under the network's label view.
std::vector<int> batch_targets(const Network& net, const Batch& batch);

// Mean of -log logit_{y_n}(X_n). Throws ShapeError if the label view does not
// match the network granularity.
double batch_loss(const Network& net, const Batch& batch, Granularity label_view);

// Batch statistics computed from the pre-update network of a step.
struct StepOutputs {
  Eigen::MatrixXd F;      // samples x classes
  Eigen::MatrixXd probs;  // softmax rows
  std::vector<int> targets;
  double loss = 0.0;                 // mean cross-entropy
  double max_F = 0.0;                // max_{n,c} F_c(X_n)
  double max_one_minus_logit = 0.0;  // max_n 1 - logit_{y_n}(X_n)
  double psi1 = 0.0;                 // max_n |(1 - logit_{y_n}) - 1/2|
};

StepOutputs compute_outputs(const BatchForward& fb, const std::vector<int>& targets);

struct UpdateRecord {
  long step = 0;
  RowMatrix delta_w;        // neurons x d
  Eigen::VectorXd delta_b;  // delta_b = -|delta_w|_2 / lambda
};

struct TrainState {
  Network net;
  long t = 0;
  double eta = 0.0;
  std::optional<long> T0;
  std::optional<long> T11;
  std::vector<double> loss_history;
  std::vector<double> psi1_history;
};

TrainState make_train_state(Network net, const ExperimentConfig& cfg);

// Raised when an update turns non-finite. Carries the pre-update network and
// the seed of the offending batch.
class TrainingAborted : public std::runtime_error {
 public:
  TrainingAborted(const std::string& what, Network snapshot, long step, std::uint64_t batch_seed)
      : std::runtime_error(what), snapshot_(std::move(snapshot)), step_(step), batch_seed_(batch_seed) {}
  const Network& snapshot() const { return snapshot_; }
  long step() const { return step_; }
  std::uint64_t batch_seed() const { return batch_seed_; }

 private:
  Network snapshot_;
  long step_;
  std::uint64_t batch_seed_;
};

// One SGD step on all neurons:
//   w <- w + eta/(N P) sum_n (1{y_n = c} - logit_c(X_n)) sum_p 1{z_{c,r,p} > 0} x_{n,p}
//   b <- b - |delta w|_2 / lambda
// with logits from the pre-update network. Increments state.t and appends the
// loss and psi1 histories. When `outputs` is given it receives the batch
// statistics of the pre-update network.
UpdateRecord sgd_step(TrainState& state, const Batch& batch, const ExperimentConfig& cfg,
                      StepOutputs* outputs = nullptr);

double t0_threshold(Granularity granularity, int d, double B);

// Records state.t as T0 the first time max F reaches the threshold.
// Returns true when T0 fired on this call.
bool detect_T0(TrainState& state, const StepOutputs& outputs, Granularity granularity, double B);
// Records state.t as T11 the first time max_n (1 - logit_{y_n}) <= eps_loss.
bool detect_T11(TrainState& state, const StepOutputs& outputs, double eps_loss);

struct StepView {
  long step;  // index of the step just applied
  const TrainState& state;  // post-update
  const Network& before;    // pre-update network
  const UpdateRecord& update;
  const StepOutputs& outputs;
};

// Read-only observers. `on_step` runs after every applied update; `on_probe`
// runs at step indices that are multiples of `cadence` and once at the end.
struct ProbeHooks {
  long cadence = 1;
  std::function<void(const TrainState&)> on_start;
  std::function<void(const StepView&)> on_step;
  std::function<void(const TrainState&)> on_probe;
};

struct RunLog {
  std::vector<long> steps;
  std::vector<double> loss;
  std::vector<double> max_F;
  std::vector<double> max_one_minus_logit;
  std::vector<double> psi1;
  std::vector<Eigen::VectorXd> mean_bias;  // per class, post-update
  std::optional<long> T0;
  std::optional<long> T11;
  long final_step = 0;
  long samples_consumed = 0;
};

struct TrainResult {
  TrainState state;
  RunLog log;
};

// Batch seed for step t: depends only on the data seed, never on granularity,
// so coarse and fine runs see identical data. `fixed_batches > 0` cycles that
// many batches instead of drawing fresh ones.
std::uint64_t batch_seed(std::uint64_t data_seed, long t, long fixed_batches = 0);

// The training loop. Draws a fresh batch per step, evaluates the stop rule with
// that step's pre-update outputs (AtT0 stops before applying the update of
// step T0), then applies the update.
TrainResult train(const ExperimentConfig& cfg, const FeatureDictionary& dict, Network initial,
                  const StopRule& stop, const TrainingOptions& opts, std::uint64_t data_seed,
                  const ProbeHooks& hooks = {}, long fixed_batches = 0);

// Convenience: initialises the network from rng and derives the data seed from it.
TrainResult train(const ExperimentConfig& cfg, const FeatureDictionary& dict, Granularity granularity,
                  const StopRule& stop, const TrainingOptions& opts, Rng& rng,
                  const ProbeHooks& hooks = {});

}  // namespace granlab
