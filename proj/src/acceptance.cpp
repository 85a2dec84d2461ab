#include "granlab/acceptance.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <sstream>

#include "granlab/oracles.hpp"

namespace granlab {

namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

std::string fmt(double v, int precision = 4) {
  std::ostringstream os;
  os << std::setprecision(precision) << v;
  return os.str();
}

// Small random instance for the oracle checks: Gaussian patches and a random
// network, labels balanced over subclasses.
struct Instance {
  ExperimentConfig cfg;
  Network net;
  Batch batch;
};

Instance random_instance(Rng& rng, Granularity g) {
  ExperimentConfig cfg;
  cfg.k_plus = cfg.k_minus = static_cast<int>(rng.uniform_int(1, 2));
  cfg.d = static_cast<int>(rng.uniform_int(2 + 2 * cfg.k_plus, 16));
  cfg.P = static_cast<int>(rng.uniform_int(2, 8));
  cfg.m = cfg.m_sub = static_cast<int>(rng.uniform_int(1, 4));
  cfg.N = 2 * cfg.k_plus * static_cast<int>(rng.uniform_int(1, 2));
  cfg.eta = rng.uniform(0.1, 1.0);
  cfg.bias_decay_divisor = rng.uniform(5.0, 30.0);

  Network net = make_empty_network(cfg, g);
  for (Eigen::Index i = 0; i < net.weights().size(); ++i) net.weights().data()[i] = rng.normal(0.5);
  for (Eigen::Index i = 0; i < net.biases().size(); ++i) net.biases()(i) = rng.normal(0.3);

  std::vector<Sample> samples;
  const int per = cfg.N / (2 * cfg.k_plus);
  for (Sign s : {Sign::Plus, Sign::Minus}) {
    for (int c = 1; c <= cfg.k_plus; ++c) {
      for (int i = 0; i < per; ++i) {
        Sample x;
        x.superclass = s;
        x.subclass = c;
        x.patches.resize(cfg.P, cfg.d);
        for (Eigen::Index j = 0; j < x.patches.size(); ++j) x.patches.data()[j] = rng.normal();
        x.patch_kinds.assign(cfg.P, PatchKind::Noise);
        x.alphas.assign(cfg.P, 0.0);
        samples.push_back(std::move(x));
      }
    }
  }
  return {cfg, std::move(net), batch_from_samples(std::move(samples))};
}

}  // namespace

VerifyLevel verify_level_from_string(std::string_view s) {
  if (s == "fast") return VerifyLevel::Fast;
  if (s == "full") return VerifyLevel::Full;
  throw ConfigError("unknown verify level: " + std::string(s));
}

StepFn default_step() {
  return [](TrainState& st, const Batch& b, const ExperimentConfig& cfg) { return sgd_step(st, b, cfg); };
}

StepFn off_by_eta_step() {
  return [](TrainState& st, const Batch& b, const ExperimentConfig& cfg) {
    UpdateRecord rec = sgd_step(st, b, cfg);
    rec.delta_w *= cfg.eta;
    return rec;
  };
}

LabConfig reference_config(int seed, int k, Granularity g) {
  LabConfig cfg = desk_preset();
  cfg.experiment.seed = seed;
  cfg.experiment.k_plus = cfg.experiment.k_minus = k;
  cfg.training.granularity = g;
  if (g == Granularity::Fine) cfg.training.stop = StopRule::at_t0(cfg.training.stop.max_steps);
  return cfg;
}

const RunOutputs& ReferenceRuns::coarse(int seed, int k) { return get(seed, k, Granularity::Coarse); }
const RunOutputs& ReferenceRuns::fine(int seed, int k) { return get(seed, k, Granularity::Fine); }

const RunOutputs& ReferenceRuns::get(int seed, int k, Granularity g) {
  const auto key = std::make_tuple(seed, k, g == Granularity::Coarse ? 0 : 1);
  auto it = runs_.find(key);
  if (it != runs_.end()) return it->second;
  if (progress_) {
    *progress_ << "  reference run: " << to_string(g) << " k=" << k << " seed=" << seed << " ..." << std::flush;
  }
  RunOutputs run = execute_run(reference_config(seed, k, g));
  if (progress_) *progress_ << " " << fmt(run.seconds, 3) << " s\n";
  return runs_.emplace(key, std::move(run)).first->second;
}

CriterionResult criterion_gradient(const StepFn& step) {
  const auto start = Clock::now();
  CriterionResult r{1, "gradient oracle", true, {}, 0, 10};
  Rng rng(0x6AD);
  double worst = 0.0, worst_bias = 0.0;
  int done = 0;
  while (done < 20) {
    Instance inst = random_instance(rng, done % 2 == 0 ? Granularity::Coarse : Granularity::Fine);
    // Keep every pre-activation well clear of the ReLU kink.
    if (oracle::min_abs_preactivation(inst.net, inst.batch) < 1e-3) continue;
    const RowMatrix grad = oracle::fd_weight_gradient(inst.net, inst.batch);
    if (grad.norm() < 1e-8) continue;
    TrainState st = make_train_state(inst.net, inst.cfg);
    const UpdateRecord rec = step(st, inst.batch, inst.cfg);
    // delta_w = -(eta / P) d(mean cross-entropy)/dw
    const RowMatrix expected = -(inst.cfg.eta / inst.cfg.P) * grad;
    worst = std::max(worst, (rec.delta_w - expected).norm() / expected.norm());
    const Eigen::VectorXd expected_b = -rec.delta_w.rowwise().norm() / inst.cfg.bias_decay_divisor;
    worst_bias = std::max(worst_bias, (rec.delta_b - expected_b).cwiseAbs().maxCoeff());
    ++done;
  }
  r.pass = worst <= 1e-4 && worst_bias <= 1e-12;
  r.detail = "max rel err " + fmt(worst) + " (tol 1e-4), bias rule err " + fmt(worst_bias) + " over 20 instances";
  r.seconds = since(start);
  return r;
}

CriterionResult criterion_forward() {
  const auto start = Clock::now();
  CriterionResult r{2, "forward oracle", true, {}, 0, 5};
  Rng rng(0xF0D);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    Instance inst = random_instance(rng, i % 2 == 0 ? Granularity::Coarse : Granularity::Fine);
    const BatchForward fb = forward_batch(inst.net, inst.batch.stacked, inst.cfg.P);
    for (int n = 0; n < inst.batch.size(); ++n) {
      const Eigen::VectorXd naive = oracle::naive_forward(inst.net, inst.batch.samples[n].patches);
      const Eigen::VectorXd dense = forward(inst.net, inst.batch.samples[n].patches, false).F;
      for (Eigen::Index c = 0; c < naive.size(); ++c) {
        const double scale = std::max(1.0, std::abs(naive(c)));
        worst = std::max(worst, std::abs(dense(c) - naive(c)) / scale);
        worst = std::max(worst, std::abs(fb.F(n, c) - naive(c)) / scale);
      }
    }
  }
  r.pass = worst <= 1e-12;
  r.detail = "max err " + fmt(worst) + " (tol 1e-12) over 100 instances";
  r.seconds = since(start);
  return r;
}

CriterionResult criterion_orthonormality() {
  const auto start = Clock::now();
  CriterionResult r{3, "dictionary orthonormality", true, {}, 0, 5};
  double worst = 0.0;
  for (int d : {16, 128, 1024}) {
    ExperimentConfig cfg;
    cfg.d = d;
    cfg.k_plus = cfg.k_minus = 4;
    for (auto mode : {DictionaryMode::StandardBasis, DictionaryMode::RandomOrthonormal}) {
      Rng rng(static_cast<std::uint64_t>(d));
      worst = std::max(worst, build_dictionary(cfg, mode, rng).orthonormality_error());
    }
  }
  r.pass = worst <= 1e-10;
  r.detail = "max |V V^T - I| " + fmt(worst) + " (tol 1e-10), d in {16,128,1024}, both modes";
  r.seconds = since(start);
  return r;
}

CriterionResult criterion_sampling() {
  const auto start = Clock::now();
  CriterionResult r{4, "sampling statistics", true, {}, 0, 30};
  const LabConfig lab = desk_preset();
  const ExperimentConfig& cfg = lab.experiment;
  Rng dict_rng(1);
  const FeatureDictionary dict = build_dictionary(cfg, DictionaryMode::StandardBasis, dict_rng);
  Rng rng(0x5A3);
  constexpr int n = 20000;
  double common_sum = 0, sub_sum = 0, sub_var = 0;
  long bad_hard = 0;
  for (int i = 0; i < n; ++i) {
    const SubclassLabel label{i % 2 == 0 ? Sign::Plus : Sign::Minus, 1 + (i / 2) % cfg.k_plus};
    const Sample e = sample_easy(cfg, dict, label, rng);
    const int nc = e.count(PatchKind::CommonFeature);
    common_sum += nc;
    sub_sum += e.count(PatchKind::SubclassFeature);
    // Given nc, the subclass count is Binomial(P - nc, s* / (P - nc)).
    const int rest = cfg.P - nc;
    const double q = rest > 0 ? std::min(1.0, static_cast<double>(cfg.s_star) / rest) : 0.0;
    sub_var += rest * q * (1.0 - q);
    const Sample h = sample_hard(cfg, dict, label, rng);
    if (h.count(PatchKind::LargeNoise) != 1 || h.count(PatchKind::CommonFeature) != 0) ++bad_hard;
  }
  const double p = static_cast<double>(cfg.s_star) / cfg.P;
  const double se_common = std::sqrt(cfg.P * p * (1 - p) / n);
  const double se_sub = std::sqrt(sub_var / n / n);
  const double z_common = (common_sum / n - cfg.s_star) / se_common;
  const double z_sub = (sub_sum / n - cfg.s_star) / se_sub;
  r.pass = std::abs(z_common) <= 3 && std::abs(z_sub) <= 3 && bad_hard == 0;
  r.detail = "common mean " + fmt(common_sum / n) + " (z " + fmt(z_common, 3) + "), subclass mean " +
             fmt(sub_sum / n) + " (z " + fmt(z_sub, 3) + "), malformed hard samples " + std::to_string(bad_hard);
  r.seconds = since(start);
  return r;
}

CriterionResult criterion_separation(ReferenceRuns& runs, const std::vector<int>& seeds) {
  CriterionResult r{5, "coarse/fine easy-hard separation", true, {}, 0, 900};
  std::ostringstream os;
  for (int seed : seeds) {
    const RunOutputs& c = runs.coarse(seed);
    const RunOutputs& f = runs.fine(seed);
    r.seconds += c.seconds + f.seconds;
    const double ce = c.errors.easy.rate, ch = c.errors.hard.rate;
    const double fe = f.errors.easy.rate, fh = f.errors.hard.rate;
    const bool ok = ce <= 0.05 && ch >= 0.25 && fe <= 0.05 && fh <= 0.10 && ch - fh >= 0.15;
    r.pass = r.pass && ok;
    os << "seed " << seed << ": coarse easy " << fmt(ce, 3) << " hard " << fmt(ch, 3) << ", fine easy "
       << fmt(fe, 3) << " hard " << fmt(fh, 3) << " (T0 " << (f.log.T0 ? std::to_string(*f.log.T0) : "-")
       << ")" << (ok ? "" : " FAIL") << "; ";
  }
  r.detail = os.str();
  return r;
}

CriterionResult criterion_ratio(ReferenceRuns& runs, const std::vector<int>& seeds) {
  CriterionResult r{6, "Theta(1/k) imbalance", true, {}, 0, 1200};
  std::ostringstream os;
  for (int seed : seeds) {
    double prev = std::numeric_limits<double>::infinity();
    os << "seed " << seed << ": coarse";
    for (int k : {4, 8, 16}) {
      const RunOutputs& c = runs.coarse(seed, k);
      r.seconds += c.seconds;
      const double ratio = c.ratios.end_ratio;
      const bool ok = std::isfinite(ratio) && ratio < prev && ratio * k >= 0.1 && ratio * k <= 10.0;
      r.pass = r.pass && ok;
      os << " k=" << k << " " << fmt(ratio, 3) << (ok ? "" : "!");
      prev = ratio;
    }
    const RunOutputs& f = runs.fine(seed);
    r.seconds += f.seconds;
    const double fr = f.ratios.end_ratio;
    const bool ok = std::isfinite(fr) && fr >= 0.5 && fr <= 2.0;
    r.pass = r.pass && ok;
    os << ", fine " << fmt(fr, 3) << (ok ? "" : "!") << "; ";
  }
  r.detail = os.str();
  return r;
}

CriterionResult criterion_log_growth(ReferenceRuns& runs) {
  CriterionResult r{7, "log-growth law", true, {}, 0, 300};
  const RunOutputs& c = runs.coarse(1);
  r.seconds = c.seconds;
  if (!c.log_fit) {
    r.pass = false;
    r.detail = "no fit: " + c.log_fit_note;
    return r;
  }
  const LogFitResult& fit = *c.log_fit;
  r.pass = fit.r_squared >= 0.95;
  r.detail = "r^2 " + fmt(fit.r_squared, 5) + " (min 0.95), T11 " + std::to_string(fit.T11) + ", t0 " +
             fmt(fit.t0) + ", a " + fmt(fit.a) + ", points " + std::to_string(fit.points);
  return r;
}

CriterionResult criterion_nonactivation() {
  const auto start = Clock::now();
  CriterionResult r{8, "non-activation at init", true, {}, 0, 60};
  std::ostringstream os;
  for (Granularity g : {Granularity::Coarse, Granularity::Fine}) {
    const LabConfig lab = reference_config(1, 8, g);
    const ExperimentConfig& cfg = lab.experiment;
    Rng dict_rng(1);
    const FeatureDictionary dict = build_dictionary(cfg, DictionaryMode::StandardBasis, dict_rng);
    Rng init_rng(init_seed_of(cfg, g));
    const Network net = init_network(cfg, g, init_rng);
    const NeuronSets sets = identify_neuron_sets(net, dict, cfg, lab.training.resolved_tau(cfg.d));
    Rng rng(0x9A0);
    std::vector<Sample> probes;
    for (int i = 0; i < 1000; ++i) {
      const SubclassLabel label{i % 2 == 0 ? Sign::Plus : Sign::Minus, 1 + (i / 2) % cfg.k_plus};
      probes.push_back(sample_easy(cfg, dict, label, rng));
    }
    const NonactivationReport rep = nonactivation_diagnostic(net, dict, sets, probes);
    const bool ok = rep.feature_rate() <= 0.01 && rep.noise_rate() <= 0.01;
    r.pass = r.pass && ok;
    os << to_string(g) << ": off-set feature " << fmt(rep.feature_rate(), 3) << ", noise " << fmt(rep.noise_rate(), 3)
       << "; ";
  }
  r.detail = os.str() + "(max 0.01 each)";
  r.seconds = since(start);
  return r;
}

CriterionResult criterion_coherence(ReferenceRuns* runs) {
  const auto start = Clock::now();
  CriterionResult r{9, "detector update coherence", true, {}, 0, 300};
  auto measure = [&r](const RunOutputs& c) {
    const auto channels = on_diagonal_common_channels(c.sets);
    std::size_t values = 0;
    for (const auto& step : c.coherence) {
      for (auto i : channels) values += step.channel[i].has_value();
    }
    const double median = median_coherence(c.coherence, channels);
    r.pass = values > 0 && median <= 0.05;
    std::string sizes;
    for (auto i : channels) {
      const auto c_idx = i / c.sets.role_count(), role = i % c.sets.role_count();
      sizes += (sizes.empty() ? "" : "/") + std::to_string(c.sets.s_star[c_idx][role].size());
    }
    r.detail = "median coherence " + fmt(median) + " (max 0.05) over " + std::to_string(c.coherence.size()) +
               " steps, " + std::to_string(values) + " values, |S*| " + sizes;
  };
  if (runs) {
    const RunOutputs& c = runs->coarse(1);
    measure(c);
    r.seconds = c.seconds;
  } else {
    LabConfig lab = reference_config(1, 8, Granularity::Coarse);
    lab.training.stop = StopRule::steps(200);
    lab.training.eval_easy = lab.training.eval_hard = 1;
    measure(execute_run(lab));
    r.seconds = since(start);
  }
  return r;
}

CriterionResult criterion_determinism(const fs::path& scratch_dir) {
  const auto start = Clock::now();
  CriterionResult r{10, "run determinism", true, {}, 0, 600};
  fs::create_directories(scratch_dir);
  LabConfig lab = desk_preset();
  lab.training.stop = StopRule::steps(100);
  lab.training.eval_easy = lab.training.eval_hard = 200;
  const fs::path config = scratch_dir / "config.json";
  save_lab_config(lab, config.string());
  std::ostringstream log;
  const int a = cmd_run(config.string(), scratch_dir / "a", log);
  const int b = cmd_run(config.string(), scratch_dir / "b", log);
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
  };
  const std::string ta = slurp(scratch_dir / "a" / "trajectories.csv");
  const std::string tb = slurp(scratch_dir / "b" / "trajectories.csv");
  const bool manifests_ok = verify_manifest(scratch_dir / "a").empty() && verify_manifest(scratch_dir / "b").empty();
  r.pass = a == 0 && b == 0 && !ta.empty() && ta == tb && manifests_ok;
  r.detail = "exit codes " + std::to_string(a) + "/" + std::to_string(b) + ", trajectories " +
             std::to_string(ta.size()) + " bytes, " + (ta == tb ? "identical" : "DIFFERENT") +
             (manifests_ok ? ", manifests verify" : ", manifest check failed");
  r.seconds = since(start);
  return r;
}

std::vector<CriterionResult> run_acceptance(VerifyLevel level, const AcceptanceOptions& opts) {
  std::vector<CriterionResult> out;
  auto add = [&](CriterionResult res) {
    if (opts.progress) print_result(*opts.progress, res);
    out.push_back(std::move(res));
  };
  add(criterion_gradient(opts.step));
  add(criterion_forward());
  add(criterion_orthonormality());
  add(criterion_sampling());
  if (level == VerifyLevel::Fast) {
    add(criterion_nonactivation());
    add(criterion_coherence(nullptr));
    return out;
  }
  ReferenceRuns runs(opts.progress);
  add(criterion_separation(runs, opts.seeds));
  add(criterion_ratio(runs, opts.seeds));
  add(criterion_log_growth(runs));
  add(criterion_nonactivation());
  add(criterion_coherence(&runs));
  const fs::path scratch =
      opts.scratch_dir.empty() ? fs::temp_directory_path() / "granlab-determinism" : opts.scratch_dir;
  add(criterion_determinism(scratch));
  return out;
}

void print_result(std::ostream& out, const CriterionResult& r) {
  out << (r.pass ? "[PASS] " : "[FAIL] ") << r.id << " " << r.name << ": " << r.detail << " ("
      << fmt(r.seconds, 3) << " s / budget " << fmt(r.budget_seconds, 4) << " s"
      << (r.over_budget() ? ", over budget" : "") << ")\n";
}

int failure_count(const std::vector<CriterionResult>& results) {
  int failed = 0;
  for (const auto& r : results) failed += !r.pass;
  return std::min(failed, 125);
}

int cmd_verify(VerifyLevel level, std::ostream& out, const StepFn& step) {
  AcceptanceOptions opts;
  opts.step = step;
  opts.progress = &out;
  const auto results = run_acceptance(level, opts);
  const int failed = failure_count(results);
  out << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criteria failed") << "\n";
  return failed;
}

}  // namespace granlab
