#include "granlab/probes.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>

#include <boost/math/tools/minima.hpp>

namespace granlab {

namespace {

constexpr double kEps = 1e-30;

double c_b_of(const ExperimentConfig& cfg, Granularity g) {
  return g == Granularity::Coarse ? cfg.c_b_coarse : cfg.c_b_fine;
}

}  // namespace

int NeuronSets::role_index(const FeatureRole& role) const {
  for (int i = 0; i < role_count(); ++i) {
    if (roles[i] == role) return i;
  }
  throw std::out_of_range("feature role not tracked: " + role.name());
}

NeuronSets identify_neuron_sets(const Network& net0, const FeatureDictionary& dict,
                                const ExperimentConfig& cfg, double tau, bool screen_all_directions) {
  NeuronSets sets;
  sets.granularity = net0.granularity();
  sets.tau = tau;
  sets.screen_all_directions = screen_all_directions;
  sets.classes = net0.classes();
  sets.roles = dict.roles();
  const double logd = std::log(static_cast<double>(net0.dim()));
  const double scale = cfg.sigma_0 * c_b_of(cfg, net0.granularity());
  sets.upper = scale * std::sqrt(logd + tau);
  sets.lower = scale * std::sqrt(std::max(0.0, logd - tau));

  const int roles = sets.role_count();
  std::vector<int> role_row(roles);
  for (int i = 0; i < roles; ++i) role_row[i] = dict.index_of(sets.roles[i]);

  // Projections of every neuron on every dictionary direction.
  const RowMatrix proj = net0.weights() * dict.vectors().transpose();

  sets.s_star.assign(net0.class_count(), std::vector<std::vector<int>>(roles));
  sets.s.assign(net0.class_count(), std::vector<std::vector<int>>(roles));
  sets.u.assign(net0.neuron_count(), {});
  for (int r = 0; r < net0.neuron_count(); ++r) {
    const int c = net0.class_of_neuron(r);
    int above_lower = 0;
    if (screen_all_directions) {
      for (Eigen::Index j = 0; j < proj.cols(); ++j) above_lower += proj(r, j) >= sets.lower;
    } else {
      for (int i = 0; i < roles; ++i) above_lower += proj(r, role_row[i]) >= sets.lower;
    }
    for (int i = 0; i < roles; ++i) {
      const double a = proj(r, role_row[i]);
      if (a < sets.lower) continue;
      sets.s[c][i].push_back(r);
      sets.u[r].push_back(i);
      // Every other screened direction below the lower threshold.
      if (a >= sets.upper && above_lower == 1) sets.s_star[c][i].push_back(r);
    }
  }
  return sets;
}

FeatureProjections project_features(const Network& net, const FeatureDictionary& dict, const NeuronSets& sets) {
  FeatureProjections out(sets.class_count(), std::vector<std::optional<double>>(sets.role_count()));
  for (int i = 0; i < sets.role_count(); ++i) {
    const auto v = dict.vector(sets.roles[i]);
    for (int c = 0; c < sets.class_count(); ++c) {
      const auto& members = sets.s_star[c][i];
      if (members.empty()) continue;
      double sum = 0.0;
      for (int r : members) sum += net.weights().row(r).dot(v);
      out[c][i] = sum / static_cast<double>(members.size());
    }
  }
  return out;
}

double CoherenceStep::worst() const {
  double w = 0.0;
  for (const auto& v : channel) {
    if (v) w = std::max(w, *v);
  }
  return w;
}

namespace {

template <typename RowFn>
CoherenceStep pairwise_coherence(long step, const NeuronSets& sets, RowFn row) {
  CoherenceStep out;
  out.step = step;
  out.channel.resize(static_cast<std::size_t>(sets.class_count()) * sets.role_count());
  for (int c = 0; c < sets.class_count(); ++c) {
    for (int i = 0; i < sets.role_count(); ++i) {
      const auto& members = sets.s_star[c][i];
      if (members.size() < 2) continue;
      double worst = 0.0;
      for (std::size_t a = 0; a < members.size(); ++a) {
        const Eigen::VectorXd ra = row(members[a]);
        const double na = ra.norm();
        for (std::size_t b = 0; b < members.size(); ++b) {
          if (a == b) continue;
          const double diff = (ra - row(members[b])).norm();
          if (diff == 0.0) continue;
          worst = std::max(worst, diff / std::max(na, kEps));
        }
      }
      out.channel[static_cast<std::size_t>(c) * sets.role_count() + i] = worst;
    }
  }
  return out;
}

}  // namespace

CoherenceStep check_update_coherence(const UpdateRecord& update, const NeuronSets& sets) {
  return pairwise_coherence(update.step, sets,
                            [&](int r) -> Eigen::VectorXd { return update.delta_w.row(r).transpose(); });
}

CoherenceStep cumulative_drift(const Network& net, const Network& net0, const NeuronSets& sets) {
  return pairwise_coherence(0, sets, [&](int r) -> Eigen::VectorXd {
    return (net.weights().row(r) - net0.weights().row(r)).transpose();
  });
}

std::vector<std::size_t> on_diagonal_common_channels(const NeuronSets& sets) {
  std::vector<std::size_t> out;
  for (int c = 0; c < sets.class_count(); ++c) {
    const int i = sets.role_index(FeatureRole::common(sets.classes[c].sign));
    out.push_back(static_cast<std::size_t>(c) * sets.role_count() + i);
  }
  return out;
}

namespace {

double median_of(std::vector<double> all) {
  if (all.empty()) return 0.0;
  const auto mid = all.begin() + static_cast<std::ptrdiff_t>(all.size() / 2);
  std::nth_element(all.begin(), mid, all.end());
  if (all.size() % 2 == 1) return *mid;
  const double upper = *mid;
  const double lower = *std::max_element(all.begin(), mid);
  return 0.5 * (lower + upper);
}

}  // namespace

double median_coherence(const std::vector<CoherenceStep>& steps) {
  std::vector<double> all;
  for (const auto& s : steps) {
    for (const auto& v : s.channel) {
      if (v) all.push_back(*v);
    }
  }
  return median_of(std::move(all));
}

double median_coherence(const std::vector<CoherenceStep>& steps, const std::vector<std::size_t>& channels) {
  std::vector<double> all;
  for (const auto& s : steps) {
    for (std::size_t i : channels) {
      if (i < s.channel.size() && s.channel[i]) all.push_back(*s.channel[i]);
    }
  }
  return median_of(std::move(all));
}

double NonactivationReport::feature_rate() const {
  return feature_events > 0 ? static_cast<double>(feature_violations) / feature_events : 0.0;
}

double NonactivationReport::noise_rate() const {
  return noise_events > 0 ? static_cast<double>(noise_violations) / noise_events : 0.0;
}

NonactivationReport nonactivation_diagnostic(const Network& net, const FeatureDictionary& dict,
                                             const NeuronSets& sets, const std::vector<Sample>& probe_samples) {
  (void)dict;
  NonactivationReport rep;
  if (probe_samples.empty()) return rep;
  const int P = static_cast<int>(probe_samples.front().patches.rows());
  const int neurons = net.neuron_count();

  // in_s[role][neuron]
  std::vector<std::vector<char>> in_s(sets.role_count(), std::vector<char>(neurons, 0));
  std::vector<long> outside(sets.role_count(), neurons);
  for (int c = 0; c < sets.class_count(); ++c) {
    for (int i = 0; i < sets.role_count(); ++i) {
      for (int r : sets.s[c][i]) in_s[i][r] = 1;
      outside[i] -= static_cast<long>(sets.s[c][i].size());
    }
  }

  // Per stacked row: role index of a feature patch, -1 for pure noise, -2 otherwise.
  std::vector<int> row_role;
  row_role.reserve(probe_samples.size() * P);
  for (const auto& x : probe_samples) {
    for (int p = 0; p < P; ++p) {
      switch (x.patch_kinds[p]) {
        case PatchKind::CommonFeature:
          row_role.push_back(sets.role_index(FeatureRole::common(x.superclass)));
          break;
        case PatchKind::SubclassFeature:
          row_role.push_back(sets.role_index(FeatureRole::sub(x.superclass, x.subclass.value_or(0))));
          break;
        case PatchKind::Noise:
          row_role.push_back(-1);
          break;
        default:
          row_role.push_back(-2);
      }
    }
  }
  for (int role : row_role) {
    if (role >= 0) rep.feature_events += outside[role];
    if (role == -1) rep.noise_events += neurons;
  }

  constexpr std::size_t kChunk = 256;
  for (std::size_t start = 0; start < probe_samples.size(); start += kChunk) {
    const std::size_t end = std::min(probe_samples.size(), start + kChunk);
    RowMatrix stacked(static_cast<Eigen::Index>((end - start) * P), net.dim());
    for (std::size_t n = start; n < end; ++n) {
      stacked.middleRows(static_cast<Eigen::Index>((n - start) * P), P) = probe_samples[n].patches;
    }
    const BatchForward fb = forward_batch(net, stacked, P);
    const auto base = static_cast<int>(start * P);
    for (const auto& e : fb.active) {
      const int role = row_role[base + e.row];
      if (role >= 0 && !in_s[role][e.neuron]) ++rep.feature_violations;
      if (role == -1) ++rep.noise_violations;
    }
  }
  return rep;
}

std::string to_string(ChannelKind kind) {
  switch (kind) {
    case ChannelKind::A:
      return "A";
    case ChannelKind::Bias:
      return "bias";
    case ChannelKind::Loss:
      return "loss";
    case ChannelKind::Logit:
      return "logit";
  }
  return "?";
}

const Channel* Trajectory::find(ChannelKind kind, const std::string& cls, const std::string& role) const {
  for (const auto& ch : channels) {
    if (ch.kind == kind && ch.cls == cls && ch.feature_role == role) return &ch;
  }
  return nullptr;
}

Channel& Trajectory::get_or_add(ChannelKind kind, const std::string& cls, const std::string& role) {
  for (auto& ch : channels) {
    if (ch.kind == kind && ch.cls == cls && ch.feature_role == role) return ch;
  }
  channels.push_back({kind, cls, role, {}, {}});
  return channels.back();
}

TrajectoryRecorder::TrajectoryRecorder(const FeatureDictionary& dict, NeuronSets sets)
    : dict_(dict), sets_(std::move(sets)) {
  // Fix the channel order up front so the CSV layout does not depend on when
  // a channel first produced a value.
  for (int c = 0; c < sets_.class_count(); ++c) {
    for (int i = 0; i < sets_.role_count(); ++i) {
      if (!sets_.s_star[c][i].empty()) {
        traj_.get_or_add(ChannelKind::A, sets_.classes[c].name(), sets_.roles[i].name());
      }
    }
  }
  for (const auto& cls : sets_.classes) traj_.get_or_add(ChannelKind::Bias, cls.name());
  traj_.get_or_add(ChannelKind::Loss, "");
  traj_.get_or_add(ChannelKind::Logit, "");
}

void TrajectoryRecorder::probe(const TrainState& state) {
  if (state.t == last_probe_) return;
  last_probe_ = state.t;
  const auto proj = project_features(state.net, dict_, sets_);
  for (int c = 0; c < sets_.class_count(); ++c) {
    for (int i = 0; i < sets_.role_count(); ++i) {
      if (!proj[c][i]) continue;
      auto& ch = traj_.get_or_add(ChannelKind::A, sets_.classes[c].name(), sets_.roles[i].name());
      ch.steps.push_back(state.t);
      ch.values.push_back(*proj[c][i]);
    }
    auto& ch = traj_.get_or_add(ChannelKind::Bias, sets_.classes[c].name());
    ch.steps.push_back(state.t);
    ch.values.push_back(state.net.biases().segment(state.net.first_neuron(c), state.net.neurons_in(c)).mean());
  }
}

void TrajectoryRecorder::step(const StepView& view) {
  auto& loss = traj_.get_or_add(ChannelKind::Loss, "");
  loss.steps.push_back(view.step);
  loss.values.push_back(view.outputs.loss);
  auto& logit = traj_.get_or_add(ChannelKind::Logit, "");
  logit.steps.push_back(view.step);
  logit.values.push_back(1.0 - view.outputs.max_one_minus_logit);
}

ProbeHooks TrajectoryRecorder::hooks(long cadence, ProbeHooks extra) {
  ProbeHooks h;
  h.cadence = cadence;
  h.on_start = extra.on_start;
  h.on_step = [this, f = extra.on_step](const StepView& v) {
    step(v);
    if (f) f(v);
  };
  h.on_probe = [this, f = extra.on_probe](const TrainState& s) {
    probe(s);
    if (f) f(s);
  };
  return h;
}

namespace {

std::string format_value(double v) {
  if (std::isnan(v)) return "nan";
  std::ostringstream os;
  os.imbue(std::locale::classic());
  os << std::setprecision(17) << v;
  return os.str();
}

}  // namespace

void write_trajectory_csv(const Trajectory& traj, std::ostream& out) {
  struct Row {
    long step;
    std::size_t channel;
    double value;
  };
  std::vector<Row> rows;
  for (std::size_t c = 0; c < traj.channels.size(); ++c) {
    const auto& ch = traj.channels[c];
    for (std::size_t i = 0; i < ch.steps.size(); ++i) rows.push_back({ch.steps[i], c, ch.values[i]});
  }
  std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
    return a.step != b.step ? a.step < b.step : a.channel < b.channel;
  });
  out << "step,channel_kind,class,feature_role,value\n";
  for (const auto& r : rows) {
    const auto& ch = traj.channels[r.channel];
    out << r.step << ',' << to_string(ch.kind) << ',' << ch.cls << ',' << ch.feature_role << ','
        << format_value(r.value) << '\n';
  }
}

void write_trajectory_csv(const Trajectory& traj, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  write_trajectory_csv(traj, out);
}

namespace {

struct LinearFit {
  double a, b, sse;
};

// Ordinary least squares of y on a single regressor.
LinearFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  const auto n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  const double a = sxx > 0 ? sxy / sxx : 0.0;
  const double b = my - a * mx;
  double sse = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = y[i] - (a * x[i] + b);
    sse += r * r;
  }
  return {a, b, sse};
}

}  // namespace

LogFitResult fit_log_growth(const std::vector<long>& steps, const std::vector<double>& values, long T11,
                            double C) {
  if (steps.size() != values.size()) throw std::invalid_argument("steps and values differ in length");
  std::vector<double> dt, y;
  for (std::size_t i = 0; i < steps.size(); ++i) {
    if (steps[i] >= T11 && std::isfinite(values[i])) {
      dt.push_back(static_cast<double>(steps[i] - T11));
      y.push_back(values[i]);
    }
  }
  if (y.size() < 20) {
    throw FitDegenerate("log fit needs at least 20 points after T11, got " + std::to_string(y.size()));
  }
  const double mean = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
  double sst = 0;
  for (double v : y) sst += (v - mean) * (v - mean);
  if (!(sst > 0.0)) throw FitDegenerate("trajectory is constant after T11");

  std::vector<double> x(y.size());
  auto sse_at = [&](double log_t0) {
    const double t0 = std::exp(log_t0);
    for (std::size_t i = 0; i < y.size(); ++i) x[i] = std::log(C * dt[i] + t0);
    return fit_line(x, y).sse;
  };

  // Coarse scan over log t0, then Brent inside the best bracket.
  const double lo = std::log(1e-8), hi = std::log(1e12);
  constexpr int kGrid = 400;
  int best = 0;
  double best_sse = std::numeric_limits<double>::infinity();
  for (int g = 0; g <= kGrid; ++g) {
    const double s = sse_at(lo + (hi - lo) * g / kGrid);
    if (s < best_sse) {
      best_sse = s;
      best = g;
    }
  }
  const double a_lo = lo + (hi - lo) * std::max(0, best - 1) / kGrid;
  const double a_hi = lo + (hi - lo) * std::min(kGrid, best + 1) / kGrid;
  const auto [log_t0, sse] =
      boost::math::tools::brent_find_minima(sse_at, a_lo, a_hi, std::numeric_limits<double>::digits);
  (void)sse;

  LogFitResult fit;
  fit.C = C;
  fit.T11 = T11;
  fit.t0 = std::exp(log_t0);
  for (std::size_t i = 0; i < y.size(); ++i) x[i] = std::log(C * dt[i] + fit.t0);
  const LinearFit lf = fit_line(x, y);
  fit.a = lf.a;
  fit.b = lf.b;
  fit.points = static_cast<long>(y.size());
  fit.r_squared = std::clamp(1.0 - lf.sse / sst, 0.0, 1.0);
  for (std::size_t i = 0; i < y.size(); ++i) {
    fit.residual_max = std::max(fit.residual_max, std::abs(y[i] - (lf.a * x[i] + lf.b)));
  }
  return fit;
}

LogFitResult fit_log_growth(const std::vector<long>& steps, const std::vector<double>& values, long T11,
                            const ExperimentConfig& cfg) {
  const double C = cfg.eta * cfg.s_star / (2.0 * cfg.k_plus * cfg.P);
  return fit_log_growth(steps, values, T11, C);
}

LogFitResult fit_log_growth(const Channel& channel, long T11, const ExperimentConfig& cfg) {
  return fit_log_growth(channel.steps, channel.values, T11, cfg);
}

RatioProfile ratio_profile(const Trajectory& traj, const NeuronSets& sets) {
  RatioProfile prof;
  double sum = 0, sum_delta = 0;
  for (const auto& role : sets.roles) {
    if (role.is_common()) continue;
    const ClassId owner = sets.granularity == Granularity::Coarse ? ClassId{role.sign, 0}
                                                                    : ClassId{role.sign, role.subclass};
    const Channel* fine = traj.find(ChannelKind::A, owner.name(), role.name());
    const Channel* common = traj.find(ChannelKind::A, owner.name(), FeatureRole::common(role.sign).name());
    if (!fine || !common || fine->values.empty() || common->values.empty()) continue;
    RatioSeries s;
    s.cls = owner.name();
    s.fine_role = role.name();
    const std::size_t n = std::min(fine->values.size(), common->values.size());
    for (std::size_t i = 0; i < n; ++i) {
      const double den = common->values[i];
      const double dden = common->values[i] - common->values[0];
      const bool bad = std::abs(den) < kEps;
      s.steps.push_back(fine->steps[i]);
      s.ratio.push_back(fine->values[i] / (bad ? kEps : den));
      const double dnum = fine->values[i] - fine->values[0];
      s.delta_ratio.push_back(std::abs(dden) < kEps ? 0.0 : dnum / dden);
      s.flagged.push_back(bad);
    }
    sum += s.ratio.back();
    sum_delta += s.delta_ratio.back();
    prof.series.push_back(std::move(s));
  }
  prof.subclasses = static_cast<int>(prof.series.size());
  if (prof.subclasses > 0) {
    prof.end_ratio = sum / prof.subclasses;
    prof.end_delta_ratio = sum_delta / prof.subclasses;
  } else {
    prof.end_ratio = std::numeric_limits<double>::quiet_NaN();
    prof.end_delta_ratio = std::numeric_limits<double>::quiet_NaN();
  }
  return prof;
}

RateEstimate make_rate(long mistakes, long count) {
  RateEstimate r;
  r.mistakes = mistakes;
  r.count = count;
  if (count <= 0) return r;
  const double n = static_cast<double>(count);
  const double p = static_cast<double>(mistakes) / n;
  constexpr double z = 1.959963984540054;
  const double denom = 1.0 + z * z / n;
  const double centre = (p + z * z / (2.0 * n)) / denom;
  const double half = z * std::sqrt(p * (1.0 - p) / n + z * z / (4.0 * n * n)) / denom;
  r.rate = p;
  r.lo = mistakes == 0 ? 0.0 : std::max(0.0, centre - half);
  r.hi = mistakes == count ? 1.0 : std::min(1.0, centre + half);
  return r;
}

ErrorReport evaluate_error(const Network& net, const ExperimentConfig& cfg, const FeatureDictionary& dict,
                           long n_easy, long n_hard, Rng& rng) {
  if (n_easy < 1 || n_hard < 1) throw std::invalid_argument("evaluate_error needs at least one sample each");
  std::vector<SubclassLabel> labels;
  for (Sign s : {Sign::Plus, Sign::Minus}) {
    const int k = s == Sign::Plus ? cfg.k_plus : cfg.k_minus;
    for (int c = 1; c <= k; ++c) labels.push_back({s, c});
  }

  ErrorReport rep;
  rep.granularity = net.granularity();
  long subclass_hits = 0;
  constexpr long kChunk = 256;

  for (Difficulty diff : {Difficulty::Easy, Difficulty::Hard}) {
    const long total = diff == Difficulty::Easy ? n_easy : n_hard;
    auto& confusion = diff == Difficulty::Easy ? rep.easy_confusion : rep.hard_confusion;
    long mistakes = 0;
    for (long start = 0; start < total; start += kChunk) {
      const long end = std::min(total, start + kChunk);
      std::vector<Sample> samples;
      samples.reserve(end - start);
      for (long i = start; i < end; ++i) {
        const auto& l = labels[i % labels.size()];
        samples.push_back(diff == Difficulty::Easy ? sample_easy(cfg, dict, l, rng) : sample_hard(cfg, dict, l, rng));
      }
      const Batch batch = batch_from_samples(std::move(samples));
      const BatchForward fb = forward_batch(net, batch.stacked, cfg.P);
      for (int n = 0; n < batch.size(); ++n) {
        const Eigen::VectorXd F = fb.F.row(n).transpose();
        const Sign truth = batch.labels_coarse[n];
        const Sign pred = predict_superclass(net, F);
        confusion[truth == Sign::Plus ? 0 : 1][pred == Sign::Plus ? 0 : 1] += 1;
        if (pred != truth) ++mistakes;
        if (diff == Difficulty::Easy && net.granularity() == Granularity::Fine) {
          subclass_hits += predict_class(F) == net.target_class(batch.labels_fine[n]);
        }
      }
    }
    (diff == Difficulty::Easy ? rep.easy : rep.hard) = make_rate(mistakes, total);
  }
  if (net.granularity() == Granularity::Fine) {
    rep.easy_subclass_accuracy = static_cast<double>(subclass_hits) / static_cast<double>(n_easy);
  }
  return rep;
}

namespace {

nlohmann::json rate_json(const RateEstimate& r) {
  return {{"rate", r.rate}, {"mistakes", r.mistakes}, {"count", r.count}, {"ci95", {r.lo, r.hi}}};
}

nlohmann::json confusion_json(const long m[2][2]) {
  return {{"truth_plus", {{"pred_plus", m[0][0]}, {"pred_minus", m[0][1]}}},
          {"truth_minus", {{"pred_plus", m[1][0]}, {"pred_minus", m[1][1]}}}};
}

}  // namespace

nlohmann::json to_json(const NeuronSets& sets) {
  nlohmann::json classes = nlohmann::json::array();
  for (int c = 0; c < sets.class_count(); ++c) {
    nlohmann::json features = nlohmann::json::array();
    for (int i = 0; i < sets.role_count(); ++i) {
      features.push_back({{"feature_role", sets.roles[i].name()},
                          {"s_star", sets.s_star[c][i]},
                          {"s", sets.s[c][i]}});
    }
    classes.push_back({{"class", sets.classes[c].name()}, {"features", std::move(features)}});
  }
  nlohmann::json u = nlohmann::json::object();
  for (std::size_t r = 0; r < sets.u.size(); ++r) {
    if (sets.u[r].empty()) continue;
    nlohmann::json names = nlohmann::json::array();
    for (int i : sets.u[r]) names.push_back(sets.roles[i].name());
    u[std::to_string(r)] = std::move(names);
  }
  return {{"schema_version", kSchemaVersion},
          {"granularity", to_string(sets.granularity)},
          {"tau", sets.tau},
          {"upper_threshold", sets.upper},
          {"lower_threshold", sets.lower},
          {"screen_all_directions", sets.screen_all_directions},
          {"classes", std::move(classes)},
          {"u", std::move(u)}};
}

nlohmann::json to_json(const ErrorReport& report) {
  nlohmann::json j = {{"schema_version", kSchemaVersion},
                      {"granularity", to_string(report.granularity)},
                      {"easy_error", report.easy.rate},
                      {"hard_error", report.hard.rate},
                      {"easy", rate_json(report.easy)},
                      {"hard", rate_json(report.hard)},
                      {"easy_confusion", confusion_json(report.easy_confusion)},
                      {"hard_confusion", confusion_json(report.hard_confusion)}};
  j["easy_subclass_accuracy"] =
      report.easy_subclass_accuracy ? nlohmann::json(*report.easy_subclass_accuracy) : nlohmann::json(nullptr);
  return j;
}

nlohmann::json to_json(const LogFitResult& fit) {
  return {{"C", fit.C},           {"t0", fit.t0},
          {"a", fit.a},           {"b", fit.b},
          {"r_squared", fit.r_squared}, {"residual_max", fit.residual_max},
          {"T11", fit.T11},       {"points", fit.points}};
}

nlohmann::json to_json(const RatioProfile& profile) {
  nlohmann::json series = nlohmann::json::array();
  for (const auto& s : profile.series) {
    const bool any_flag = std::find(s.flagged.begin(), s.flagged.end(), true) != s.flagged.end();
    series.push_back({{"class", s.cls},
                      {"feature_role", s.fine_role},
                      {"end_ratio", s.ratio.empty() ? 0.0 : s.ratio.back()},
                      {"end_delta_ratio", s.delta_ratio.empty() ? 0.0 : s.delta_ratio.back()},
                      {"flagged", any_flag}});
  }
  auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
  return {{"end_ratio", num(profile.end_ratio)},
          {"end_delta_ratio", num(profile.end_delta_ratio)},
          {"subclasses", profile.subclasses},
          {"series", std::move(series)}};
}

}  // namespace granlab
