#include "granlab/lab.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <sstream>
#include <thread>

#ifndef GRANLAB_REVISION
#define GRANLAB_REVISION "unknown"
#endif

namespace granlab {

namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kDataTag = 0x2222;
constexpr std::uint64_t kInitTag = 0x1111;
constexpr std::uint64_t kEvalTag = 0xE7A1;
constexpr std::uint64_t kDictTag = 0xD1C7;

std::string stop_name(StopKind k) {
  switch (k) {
    case StopKind::MaxSteps:
      return "max_steps";
    case StopKind::AtT0:
      return "at_t0";
    case StopKind::AtT11PlusBudget:
      return "at_t11_plus_budget";
  }
  return "?";
}

nlohmann::json optional_step(const std::optional<long>& s) {
  return s ? nlohmann::json(*s) : nlohmann::json(nullptr);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::string hex(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

}  // namespace

std::uint64_t data_seed_of(const ExperimentConfig& cfg) { return split_seed(cfg.seed, kDataTag); }

std::uint64_t init_seed_of(const ExperimentConfig& cfg, Granularity g) {
  return split_seed(cfg.seed, kInitTag + (g == Granularity::Coarse ? 0 : 1));
}

std::uint64_t eval_seed_of(const ExperimentConfig& cfg) { return split_seed(cfg.seed, kEvalTag); }

RunOutputs execute_run(const LabConfig& cfg, long coherence_steps) {
  const auto start = std::chrono::steady_clock::now();
  const ExperimentConfig& e = cfg.experiment;
  const TrainingOptions& opts = cfg.training;
  const Granularity g = opts.granularity;

  Rng dict_rng(split_seed(e.seed, kDictTag));
  FeatureDictionary dict = build_dictionary(e, opts.dictionary, dict_rng);
  Rng init_rng(init_seed_of(e, g));
  Network net0 = init_network(e, g, init_rng);
  NeuronSets sets = identify_neuron_sets(net0, dict, e, opts.resolved_tau(e.d), opts.screen_all_directions);

  TrajectoryRecorder recorder(dict, sets);
  std::vector<CoherenceStep> coherence;
  std::optional<Network> net_T0;
  ProbeHooks extra;
  extra.on_step = [&](const StepView& v) {
    if (v.step < coherence_steps) coherence.push_back(check_update_coherence(v.update, sets));
    if (!net_T0 && v.state.T0 && *v.state.T0 == v.step) net_T0 = v.before;
  };
  TrainResult res = train(e, dict, net0, opts.stop, opts, data_seed_of(e),
                          recorder.hooks(std::max<long>(1, opts.probe_every), extra));
  // AtT0 stops before the update of step T0, so the final net is the T0 net.
  if (!net_T0 && res.state.T0 && *res.state.T0 == res.state.t) net_T0 = res.state.net;

  Rng eval_rng(eval_seed_of(e));
  ErrorReport errors = evaluate_error(res.state.net, e, dict, std::max<long>(1, opts.eval_easy),
                                      std::max<long>(1, opts.eval_hard), eval_rng);

  RunOutputs out{cfg,
                 std::move(dict),
                 std::move(net0),
                 std::move(net_T0),
                 std::move(res.state.net),
                 std::move(sets),
                 recorder.trajectory(),
                 std::move(res.log),
                 std::move(coherence),
                 std::move(errors),
                 {},
                 std::nullopt,
                 {},
                 0.0};
  out.ratios = ratio_profile(out.trajectory, out.sets);

  if (g == Granularity::Coarse) {
    const Channel* ch = out.trajectory.find(ChannelKind::A, ClassId{Sign::Plus, 0}.name(),
                                            FeatureRole::common(Sign::Plus).name());
    if (!out.log.T11) {
      out.log_fit_note = "T11 not reached";
    } else if (!ch) {
      out.log_fit_note = "no detector neurons for v+";
    } else {
      try {
        out.log_fit = fit_log_growth(*ch, *out.log.T11, e);
      } catch (const FitDegenerate& err) {
        out.log_fit_note = err.what();
      }
    }
  } else {
    out.log_fit_note = "log fit applies to coarse runs";
  }
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof(buf));
    if (in.gcount() > 0) EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
  return os.str();
}

void write_run(const RunOutputs& run, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  // A stale manifest would claim a complete run while files are rewritten.
  fs::remove(out_dir / "manifest.json");

  const std::uint64_t cfg_hash = config_hash(run.cfg);
  std::vector<std::string> files;

  save_lab_config(run.cfg, (out_dir / "config.json").string());
  files.push_back("config.json");

  write_trajectory_csv(run.trajectory, (out_dir / "trajectories.csv").string());
  files.push_back("trajectories.csv");

  write_text(out_dir / "neuron_sets.json", to_json(run.sets).dump(2) + "\n");
  files.push_back("neuron_sets.json");

  write_text(out_dir / "error_report.json", to_json(run.errors).dump(2) + "\n");
  files.push_back("error_report.json");

  auto snapshot = [&](const Network& net, const std::string& tag, long step) {
    const std::string bin = "net_" + tag + ".bin";
    const std::string side = "net_" + tag + ".json";
    save_network(net, (out_dir / bin).string());
    nlohmann::json j = {{"schema_version", kSchemaVersion}, {"cfg_hash", hex(cfg_hash)}, {"step", step}};
    write_text(out_dir / side, j.dump(2) + "\n");
    files.push_back(bin);
    files.push_back(side);
  };
  snapshot(run.net0, "0", 0);
  if (run.net_T0) snapshot(*run.net_T0, "T0", *run.log.T0);
  snapshot(run.final_net, "final", run.log.final_step);

  nlohmann::json inventory = nlohmann::json::array();
  for (const auto& f : files) {
    inventory.push_back({{"path", f}, {"sha256", sha256_file(out_dir / f)}, {"bytes", fs::file_size(out_dir / f)}});
  }

  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::ostringstream stamp;
  stamp << std::put_time(std::gmtime(&now), "%Y%m%dT%H%M%SZ");
  const auto& opts = run.cfg.training;

  nlohmann::json manifest = {
      {"schema_version", kSchemaVersion},
      {"run_id", stamp.str() + "-seed" + std::to_string(run.cfg.experiment.seed)},
      {"revision", GRANLAB_REVISION},
      {"cfg_hash", hex(cfg_hash)},
      {"config", to_json(run.cfg)},
      {"granularity", to_string(opts.granularity)},
      {"stop_rule",
       {{"kind", stop_name(opts.stop.kind)}, {"max_steps", opts.stop.max_steps}, {"budget", opts.stop.budget}}},
      {"phase_markers", {{"T0", optional_step(run.log.T0)}, {"T11", optional_step(run.log.T11)}}},
      {"final_step", run.log.final_step},
      {"samples_consumed", run.log.samples_consumed},
      {"error_report", to_json(run.errors)},
      {"ratio_profile", to_json(run.ratios)},
      {"log_fit", run.log_fit ? to_json(*run.log_fit) : nlohmann::json(nullptr)},
      {"log_fit_note", run.log_fit_note},
      {"median_update_coherence", median_coherence(run.coherence, on_diagonal_common_channels(run.sets))},
      {"files", std::move(inventory)}};
  write_text(out_dir / "manifest.json", manifest.dump(2) + "\n");
}

std::vector<std::string> verify_manifest(const fs::path& out_dir) {
  std::vector<std::string> problems;
  const fs::path path = out_dir / "manifest.json";
  std::ifstream in(path);
  if (!in) return {"missing manifest.json"};
  nlohmann::json m;
  try {
    in >> m;
  } catch (const nlohmann::json::exception& e) {
    return {std::string("unreadable manifest: ") + e.what()};
  }
  for (const auto& f : m.at("files")) {
    const fs::path p = out_dir / f.at("path").get<std::string>();
    if (!fs::exists(p)) {
      problems.push_back("missing " + p.string());
    } else if (sha256_file(p) != f.at("sha256").get<std::string>()) {
      problems.push_back("checksum mismatch " + p.string());
    }
  }
  return problems;
}

int cmd_run(const std::string& config_path, const fs::path& out_dir, std::ostream& log) {
  LabConfig cfg;
  try {
    cfg = load_lab_config(config_path);
  } catch (const std::exception& e) {
    log << "error: cannot load config " << config_path << ": " << e.what() << "\n";
    return 1;
  }
  const ValidationReport rep = validate_config(cfg.experiment);
  if (!rep.ok()) {
    log << "error: invalid config " << config_path << "\n" << rep.to_string();
    return 1;
  }
  if (rep.warning_count() > 0) log << rep.to_string();

  try {
    const RunOutputs run = execute_run(cfg);
    write_run(run, out_dir);
    log << "run complete: " << to_string(cfg.training.granularity) << " steps=" << run.log.final_step
        << " easy_error=" << run.errors.easy.rate << " hard_error=" << run.errors.hard.rate << "\n";
    return 0;
  } catch (const TrainingAborted& e) {
    fs::create_directories(out_dir);
    save_network(e.snapshot(), (out_dir / "abort_net.bin").string());
    nlohmann::json j = {{"schema_version", kSchemaVersion},
                        {"message", e.what()},
                        {"step", e.step()},
                        {"batch_seed", e.batch_seed()},
                        {"cfg_hash", hex(config_hash(cfg))}};
    write_text(out_dir / "abort.json", j.dump(2) + "\n");
    log << "error: training aborted: " << e.what() << "\n";
    return 2;
  }
}

SweepAxis sweep_axis_from_string(std::string_view s) {
  if (s == "k") return SweepAxis::K;
  if (s == "sigma_zeta") return SweepAxis::SigmaZeta;
  if (s == "s_star") return SweepAxis::SStar;
  throw ConfigError("unknown sweep axis: " + std::string(s));
}

std::string to_string(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::K:
      return "k";
    case SweepAxis::SigmaZeta:
      return "sigma_zeta";
    case SweepAxis::SStar:
      return "s_star";
  }
  return "?";
}

LabConfig sweep_config(const LabConfig& base, SweepAxis axis, double value, Granularity g) {
  LabConfig cfg = base;
  switch (axis) {
    case SweepAxis::K:
      cfg.experiment.k_plus = cfg.experiment.k_minus = static_cast<int>(std::lround(value));
      break;
    case SweepAxis::SigmaZeta:
      cfg.experiment.sigma_zeta = value;
      break;
    case SweepAxis::SStar:
      cfg.experiment.s_star = static_cast<int>(std::lround(value));
      break;
  }
  cfg.training.granularity = g;
  if (g == Granularity::Fine) cfg.training.stop = StopRule::at_t0(cfg.training.stop.max_steps);
  return cfg;
}

int worker_threads() {
  const char* env = std::getenv("GRANLAB_THREADS");
  if (!env) return 1;
  const int n = std::atoi(env);
  return std::max(1, n);
}

namespace {

std::string value_label(SweepAxis axis, double v) {
  std::ostringstream os;
  os.imbue(std::locale::classic());
  if (axis == SweepAxis::SigmaZeta) {
    os << std::setprecision(6) << v;
  } else {
    os << std::lround(v);
  }
  return os.str();
}

}  // namespace

int cmd_sweep(const std::string& config_path, SweepAxis axis, const std::vector<double>& values,
              const fs::path& out_dir, std::ostream& log) {
  LabConfig base;
  try {
    base = load_lab_config(config_path);
  } catch (const std::exception& e) {
    log << "error: cannot load config " << config_path << ": " << e.what() << "\n";
    return 1;
  }

  struct Job {
    double value = 0;
    Granularity g = Granularity::Coarse;
    LabConfig cfg;
    fs::path dir;
    bool ok = false;
    std::string error;
    double easy = 0, hard = 0, end_ratio = 0;
  };
  std::vector<Job> jobs;
  for (double v : values) {
    for (Granularity g : {Granularity::Coarse, Granularity::Fine}) {
      Job j;
      j.value = v;
      j.g = g;
      j.cfg = sweep_config(base, axis, v, g);
      j.dir = out_dir / (to_string(axis) + "=" + value_label(axis, v) + "_" + to_string(g));
      jobs.push_back(std::move(j));
    }
  }
  fs::create_directories(out_dir);

  std::mutex log_mutex;
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < jobs.size();) {
      Job& j = jobs[i];
      try {
        const ValidationReport rep = validate_config(j.cfg.experiment);
        if (!rep.ok()) throw ConfigError(rep.to_string());
        const RunOutputs run = execute_run(j.cfg);
        write_run(run, j.dir);
        j.ok = true;
        j.easy = run.errors.easy.rate;
        j.hard = run.errors.hard.rate;
        j.end_ratio = run.ratios.end_ratio;
      } catch (const std::exception& e) {
        j.error = e.what();
      }
      std::lock_guard lock(log_mutex);
      log << j.dir.filename().string() << ": " << (j.ok ? "ok" : "FAILED " + j.error) << "\n";
    }
  };
  const int threads = std::min<int>(worker_threads(), static_cast<int>(jobs.size()));
  std::vector<std::thread> pool;
  for (int t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  std::ostringstream csv;
  csv.imbue(std::locale::classic());
  csv << std::setprecision(17);
  csv << "value,granularity,easy_error,hard_error,end_ratio\n";
  int failed = 0;
  for (const auto& j : jobs) {
    csv << value_label(axis, j.value) << ',' << to_string(j.g) << ',';
    if (j.ok) {
      csv << j.easy << ',' << j.hard << ',';
      if (std::isfinite(j.end_ratio)) {
        csv << j.end_ratio;
      } else {
        csv << "nan";
      }
    } else {
      csv << "nan,nan,nan";
      ++failed;
    }
    csv << '\n';
  }
  write_text(out_dir / "summary.csv", csv.str());
  return std::min(failed, 125);
}

int cmd_preset(const std::string& name, const std::string& emit_path, std::ostream& log) {
  try {
    save_lab_config(preset(name), emit_path);
  } catch (const std::exception& e) {
    log << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace granlab
