#include "granlab/sgd.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace granlab {

namespace {

constexpr std::uint64_t kInitTag = 0x1111;
constexpr std::uint64_t kDataTag = 0x2222;

UpdateRecord apply_update(TrainState& state, const Batch& batch, const BatchForward& fb,
                          const StepOutputs& out, const ExperimentConfig& cfg) {
  Network& net = state.net;
  const int N = batch.size();
  const int P = cfg.P;
  const double scale = state.eta / (static_cast<double>(N) * P);

  // coef(n, c) = eta/(N P) * (1{y_n = c} - logit_c(X_n))
  Eigen::MatrixXd coef = -out.probs;
  for (int n = 0; n < N; ++n) coef(n, out.targets[n]) += 1.0;
  coef *= scale;

  UpdateRecord rec;
  rec.step = state.t;
  rec.delta_w = RowMatrix::Zero(net.neuron_count(), net.dim());
  for (const auto& e : fb.active) {
    const int n = e.row / P;
    rec.delta_w.row(e.neuron) += coef(n, net.class_of_neuron(e.neuron)) * batch.stacked.row(e.row);
  }
  rec.delta_b = -rec.delta_w.rowwise().norm() / cfg.bias_decay_divisor;

  if (!rec.delta_w.allFinite() || !rec.delta_b.allFinite()) {
    throw TrainingAborted("non-finite update at step " + std::to_string(state.t), net, state.t, 0);
  }
  net.weights() += rec.delta_w;
  net.biases() += rec.delta_b;
  state.loss_history.push_back(out.loss);
  state.psi1_history.push_back(out.psi1);
  ++state.t;
  return rec;
}

}  // namespace

Batch batch_from_samples(std::vector<Sample> samples) {
  Batch b;
  if (samples.empty()) return b;
  const auto P = samples.front().patches.rows();
  const auto d = samples.front().patches.cols();
  b.stacked.resize(P * static_cast<Eigen::Index>(samples.size()), d);
  for (std::size_t n = 0; n < samples.size(); ++n) {
    b.stacked.middleRows(static_cast<Eigen::Index>(n) * P, P) = samples[n].patches;
    b.labels_coarse.push_back(samples[n].superclass);
    b.labels_fine.push_back(samples[n].label());
  }
  b.samples = std::move(samples);
  return b;
}

Batch make_batch(const ExperimentConfig& cfg, const FeatureDictionary& dict, Rng& rng) {
  if (cfg.k_plus <= 0 || cfg.N % (2 * cfg.k_plus) != 0) {
    throw BatchError("N not divisible by 2k (N=" + std::to_string(cfg.N) + ")");
  }
  const int per = cfg.N / (2 * cfg.k_plus);
  std::vector<SubclassLabel> labels;
  labels.reserve(cfg.N);
  for (Sign s : {Sign::Plus, Sign::Minus}) {
    const int k = s == Sign::Plus ? cfg.k_plus : cfg.k_minus;
    for (int c = 1; c <= k; ++c) labels.insert(labels.end(), per, SubclassLabel{s, c});
  }
  for (int i = static_cast<int>(labels.size()) - 1; i > 0; --i) {
    std::swap(labels[i], labels[rng.uniform_int(0, i)]);
  }
  std::vector<Sample> samples;
  samples.reserve(labels.size());
  for (const auto& l : labels) samples.push_back(sample_easy(cfg, dict, l, rng));
  return batch_from_samples(std::move(samples));
}

std::vector<int> batch_targets(const Network& net, const Batch& batch) {
  std::vector<int> t;
  t.reserve(batch.size());
  for (const auto& l : batch.labels_fine) t.push_back(net.target_class(l));
  return t;
}

StepOutputs compute_outputs(const BatchForward& fb, const std::vector<int>& targets) {
  StepOutputs out;
  out.F = fb.F;
  out.targets = targets;
  const auto N = static_cast<int>(fb.F.rows());
  out.probs.resize(N, fb.F.cols());
  double loss = 0.0;
  out.max_F = N > 0 ? fb.F.maxCoeff() : 0.0;
  for (int n = 0; n < N; ++n) {
    const Eigen::VectorXd f = fb.F.row(n).transpose();
    const double top = f.maxCoeff();
    const double lse = top + std::log((f.array() - top).exp().sum());
    loss += lse - f(targets[n]);
    out.probs.row(n) = logits(f).transpose();
    const double miss = 1.0 - out.probs(n, targets[n]);
    out.max_one_minus_logit = std::max(out.max_one_minus_logit, miss);
    out.psi1 = std::max(out.psi1, std::abs(miss - 0.5));
  }
  out.loss = N > 0 ? loss / N : 0.0;
  return out;
}

double batch_loss(const Network& net, const Batch& batch, Granularity label_view) {
  if (label_view != net.granularity()) {
    throw ShapeError("label view does not match network granularity");
  }
  const int P = static_cast<int>(batch.samples.front().patches.rows());
  return compute_outputs(forward_batch(net, batch.stacked, P), batch_targets(net, batch)).loss;
}

TrainState make_train_state(Network net, const ExperimentConfig& cfg) {
  return TrainState{std::move(net), 0, cfg.eta, std::nullopt, std::nullopt, {}, {}};
}

UpdateRecord sgd_step(TrainState& state, const Batch& batch, const ExperimentConfig& cfg,
                      StepOutputs* outputs) {
  const BatchForward fb = forward_batch(state.net, batch.stacked, cfg.P);
  StepOutputs out = compute_outputs(fb, batch_targets(state.net, batch));
  UpdateRecord rec = apply_update(state, batch, fb, out, cfg);
  if (outputs) *outputs = std::move(out);
  return rec;
}

double t0_threshold(Granularity granularity, int d, double B) {
  return granularity == Granularity::Coarse ? 1.0 / d : B;
}

bool detect_T0(TrainState& state, const StepOutputs& outputs, Granularity granularity, double B) {
  if (state.T0) return false;
  if (outputs.max_F >= t0_threshold(granularity, state.net.dim(), B)) {
    state.T0 = state.t;
    return true;
  }
  return false;
}

bool detect_T11(TrainState& state, const StepOutputs& outputs, double eps_loss) {
  if (state.T11) return false;
  if (outputs.max_one_minus_logit <= eps_loss) {
    state.T11 = state.t;
    return true;
  }
  return false;
}

std::uint64_t batch_seed(std::uint64_t data_seed, long t, long fixed_batches) {
  const long slot = fixed_batches > 0 ? t % fixed_batches : t;
  return split_seed(data_seed, static_cast<std::uint64_t>(slot));
}

TrainResult train(const ExperimentConfig& cfg, const FeatureDictionary& dict, Network initial,
                  const StopRule& stop, const TrainingOptions& opts, std::uint64_t data_seed,
                  const ProbeHooks& hooks, long fixed_batches) {
  TrainResult result{make_train_state(std::move(initial), cfg), {}};
  TrainState& state = result.state;
  RunLog& log = result.log;
  const Granularity gran = state.net.granularity();
  const long cadence = std::max<long>(1, hooks.cadence);

  if (hooks.on_start) hooks.on_start(state);
  if (hooks.on_probe) hooks.on_probe(state);
  long last_probe = 0;

  for (;;) {
    if (state.t >= stop.max_steps) break;
    const std::uint64_t seed = batch_seed(data_seed, state.t, fixed_batches);
    Rng batch_rng(seed);
    const Batch batch = make_batch(cfg, dict, batch_rng);
    const BatchForward fb = forward_batch(state.net, batch.stacked, cfg.P);
    const StepOutputs out = compute_outputs(fb, batch_targets(state.net, batch));

    detect_T0(state, out, gran, opts.t0_threshold_fine);
    if (gran == Granularity::Coarse) detect_T11(state, out, opts.eps_loss);
    if (stop.kind == StopKind::AtT0 && state.T0) break;
    if (stop.kind == StopKind::AtT11PlusBudget && state.T11 && state.t >= *state.T11 + stop.budget) break;

    std::optional<Network> before;
    if (hooks.on_step) before = state.net;
    UpdateRecord rec;
    try {
      rec = apply_update(state, batch, fb, out, cfg);
    } catch (const TrainingAborted& e) {
      throw TrainingAborted(e.what(), e.snapshot(), e.step(), seed);
    }
    log.steps.push_back(rec.step);
    log.loss.push_back(out.loss);
    log.max_F.push_back(out.max_F);
    log.max_one_minus_logit.push_back(out.max_one_minus_logit);
    log.psi1.push_back(out.psi1);
    Eigen::VectorXd mb(state.net.class_count());
    for (int c = 0; c < state.net.class_count(); ++c) {
      mb(c) = state.net.biases().segment(state.net.first_neuron(c), state.net.neurons_in(c)).mean();
    }
    log.mean_bias.push_back(std::move(mb));
    log.samples_consumed += batch.size();

    if (hooks.on_step) hooks.on_step(StepView{rec.step, state, *before, rec, out});
    if (hooks.on_probe && state.t % cadence == 0) {
      hooks.on_probe(state);
      last_probe = state.t;
    }
  }
  if (hooks.on_probe && last_probe != state.t) hooks.on_probe(state);
  log.T0 = state.T0;
  log.T11 = state.T11;
  log.final_step = state.t;
  return result;
}

TrainResult train(const ExperimentConfig& cfg, const FeatureDictionary& dict, Granularity granularity,
                  const StopRule& stop, const TrainingOptions& opts, Rng& rng, const ProbeHooks& hooks) {
  Rng init_rng = rng.fork(kInitTag);
  Network net = init_network(cfg, granularity, init_rng);
  const std::uint64_t data_seed = split_seed(rng.fork(kDataTag).engine()(), 0);
  return train(cfg, dict, std::move(net), stop, opts, data_seed, hooks);
}

}  // namespace granlab
