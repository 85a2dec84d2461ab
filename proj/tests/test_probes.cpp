#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <boost/math/distributions/normal.hpp>
#include <gtest/gtest.h>

#include "granlab/probes.hpp"
#include "support.hpp"

using namespace granlab;
using granlab::testing::basis;
using granlab::testing::tiny_config;

namespace {

double tau_of(const ExperimentConfig& cfg) { return 0.1 * std::log(static_cast<double>(cfg.d)); }

TrainingOptions quiet_options() {
  TrainingOptions opts;
  opts.eval_easy = opts.eval_hard = 1;
  return opts;
}

void check_set_invariants(const NeuronSets& sets) {
  for (int c = 0; c < sets.class_count(); ++c) {
    std::vector<int> owner;
    for (int i = 0; i < sets.role_count(); ++i) {
      for (int r : sets.s_star[c][i]) {
        EXPECT_NE(std::find(sets.s[c][i].begin(), sets.s[c][i].end(), r), sets.s[c][i].end());
        owner.push_back(r);
      }
    }
    std::sort(owner.begin(), owner.end());
    EXPECT_EQ(std::adjacent_find(owner.begin(), owner.end()), owner.end()) << "S* sets overlap";
  }
}

}  // namespace

TEST(NeuronSets, EmptyWhenThresholdsDominate) {
  ExperimentConfig cfg = tiny_config();
  Rng rng(1);
  const Network net = init_network(cfg, Granularity::Coarse, rng);
  cfg.c_b_coarse = 1e6;
  const NeuronSets sets = identify_neuron_sets(net, basis(cfg), cfg, tau_of(cfg));
  for (int c = 0; c < sets.class_count(); ++c) {
    for (int i = 0; i < sets.role_count(); ++i) {
      EXPECT_TRUE(sets.s[c][i].empty());
      EXPECT_TRUE(sets.s_star[c][i].empty());
    }
  }
}

TEST(NeuronSets, HandBuiltLuckyNeuron) {
  ExperimentConfig cfg = desk_preset().experiment;
  cfg.c_b_coarse = 1.0;
  const auto dict = basis(cfg);
  Network net = make_empty_network(cfg, Granularity::Coarse);
  const double a = 2.0 * cfg.sigma_0 * std::sqrt(std::log(128.0));
  net.weights().row(5) = a * dict.vector(FeatureRole::common(Sign::Plus));
  // Above the lower threshold on two features: in S for both, S* for neither.
  net.weights().row(6) = a * (dict.vector(FeatureRole::common(Sign::Plus)) + dict.vector(FeatureRole::sub(Sign::Plus, 1)));
  const NeuronSets sets = identify_neuron_sets(net, dict, cfg, tau_of(cfg));
  EXPECT_GT(a, sets.upper);
  EXPECT_EQ(sets.s_star[0][0], std::vector<int>{5});
  EXPECT_EQ(sets.s[0][0], (std::vector<int>{5, 6}));
  EXPECT_EQ(sets.s[0][2], std::vector<int>{6});
  EXPECT_TRUE(sets.s_star[0][2].empty());
  EXPECT_EQ(sets.u[6], (std::vector<int>{0, 2}));
  check_set_invariants(sets);
}

TEST(NeuronSets, ScreenAllDirectionsIsStricter) {
  ExperimentConfig cfg = desk_preset().experiment;
  const auto dict = basis(cfg);
  Network net = make_empty_network(cfg, Granularity::Coarse);
  const double a = 3.0 * cfg.sigma_0 * std::sqrt(std::log(128.0));
  net.weights().row(0) = a * dict.vector(FeatureRole::common(Sign::Plus));
  net.weights()(0, 100) = a;  // unassigned direction
  const NeuronSets loose = identify_neuron_sets(net, dict, cfg, tau_of(cfg), false);
  const NeuronSets strict = identify_neuron_sets(net, dict, cfg, tau_of(cfg), true);
  EXPECT_EQ(loose.s_star[0][0], std::vector<int>{0});
  EXPECT_TRUE(strict.s_star[0][0].empty());
  EXPECT_EQ(strict.s[0][0], std::vector<int>{0});
}

TEST(NeuronSets, SizeMatchesNormalTail) {
  const ExperimentConfig cfg = desk_preset().experiment;
  const auto dict = basis(cfg);
  const double tau = tau_of(cfg);
  const boost::math::normal_distribution<double> std_normal;
  const double p = boost::math::cdf(boost::math::complement(std_normal, cfg.c_b_coarse * std::sqrt(std::log(128.0) - tau)));
  long total = 0;
  const int seeds = 10;
  for (int seed = 0; seed < seeds; ++seed) {
    Rng rng(500 + seed);
    const Network net = init_network(cfg, Granularity::Coarse, rng);
    const NeuronSets sets = identify_neuron_sets(net, dict, cfg, tau);
    check_set_invariants(sets);
    total += static_cast<long>(sets.s[0][0].size());
  }
  const double n = static_cast<double>(seeds) * cfg.m;
  EXPECT_NEAR(static_cast<double>(total), n * p, 4.0 * std::sqrt(n * p * (1 - p)));
}

TEST(Projections, MeanOverMembersAndAbsentWhenEmpty) {
  ExperimentConfig cfg = desk_preset().experiment;
  const auto dict = basis(cfg);
  Network net = make_empty_network(cfg, Granularity::Coarse);
  const double a = 3.0 * cfg.sigma_0 * std::sqrt(std::log(128.0));
  net.weights().row(1) = a * dict.vector(FeatureRole::common(Sign::Plus));
  net.weights().row(2) = 2 * a * dict.vector(FeatureRole::common(Sign::Plus));
  const NeuronSets sets = identify_neuron_sets(net, dict, cfg, tau_of(cfg));
  Network later = net;
  later.weights().row(1) = 3.0 * dict.vector(FeatureRole::common(Sign::Plus));
  later.weights().row(2) = 3.0 * dict.vector(FeatureRole::common(Sign::Plus));
  const auto proj = project_features(later, dict, sets);
  ASSERT_TRUE(proj[0][0].has_value());
  EXPECT_DOUBLE_EQ(*proj[0][0], 3.0);
  EXPECT_FALSE(proj[0][1].has_value());
  EXPECT_FALSE(proj[1][0].has_value());
}

TEST(Projections, StepConsistency) {
  const ExperimentConfig cfg = desk_preset().experiment;
  const auto dict = basis(cfg);
  Rng rng(3);
  const Network net0 = init_network(cfg, Granularity::Coarse, rng);
  const NeuronSets sets = identify_neuron_sets(net0, dict, cfg, tau_of(cfg));
  TrainState state = make_train_state(net0, cfg);
  for (int t = 0; t < 3; ++t) {
    const auto before = project_features(state.net, dict, sets);
    Rng brng(40 + t);
    const UpdateRecord rec = sgd_step(state, make_batch(cfg, dict, brng), cfg);
    const auto after = project_features(state.net, dict, sets);
    for (int c = 0; c < sets.class_count(); ++c) {
      for (int i = 0; i < sets.role_count(); ++i) {
        if (!before[c][i]) continue;
        double mean_delta = 0.0;
        for (int r : sets.s_star[c][i]) mean_delta += rec.delta_w.row(r).dot(dict.vector(sets.roles[i]));
        mean_delta /= static_cast<double>(sets.s_star[c][i].size());
        EXPECT_NEAR(*after[c][i] - *before[c][i], mean_delta, 1e-12);
      }
    }
  }
}

TEST(Coherence, ZeroUpdatesAndIdenticalUpdates) {
  NeuronSets sets;
  sets.classes = {ClassId{Sign::Plus, 0}, ClassId{Sign::Minus, 0}};
  sets.roles = {FeatureRole::common(Sign::Plus), FeatureRole::common(Sign::Minus)};
  sets.s_star = {{{0, 1}, {}}, {{}, {2, 3}}};
  sets.s = sets.s_star;
  UpdateRecord rec;
  rec.delta_w = RowMatrix::Zero(4, 3);
  rec.delta_b = Eigen::VectorXd::Zero(4);
  CoherenceStep step = check_update_coherence(rec, sets);
  ASSERT_TRUE(step.channel[0].has_value());
  EXPECT_EQ(*step.channel[0], 0.0);
  EXPECT_FALSE(step.channel[1].has_value());
  rec.delta_w.row(0) << 1.0, 2.0, 3.0;
  rec.delta_w.row(1) << 1.0, 2.0, 3.0;
  rec.delta_w.row(2) << 1.0, 0.0, 0.0;
  rec.delta_w.row(3) << 1.5, 0.0, 0.0;
  step = check_update_coherence(rec, sets);
  EXPECT_EQ(*step.channel[0], 0.0);
  EXPECT_DOUBLE_EQ(*step.channel[3], 0.5);
  EXPECT_DOUBLE_EQ(step.worst(), 0.5);
  EXPECT_EQ(on_diagonal_common_channels(sets), (std::vector<std::size_t>{0, 3}));
  EXPECT_DOUBLE_EQ(median_coherence({step}, {3}), 0.5);
  EXPECT_DOUBLE_EQ(median_coherence({step}), 0.25);
}

TEST(Coherence, IdenticalPatchSetsGiveIdenticalUpdates) {
  ExperimentConfig cfg = tiny_config();
  const auto dict = basis(cfg);
  Network net = make_empty_network(cfg, Granularity::Coarse);
  net.biases().setConstant(-1.0);
  // Two members with the same weights activate on the same patches.
  net.weights().row(0) = dict.vector(FeatureRole::common(Sign::Plus));
  net.weights().row(1) = dict.vector(FeatureRole::common(Sign::Plus));
  net.biases()(0) = net.biases()(1) = -0.5;
  NeuronSets sets;
  sets.classes = net.classes();
  sets.roles = dict.roles();
  sets.s_star.assign(2, std::vector<std::vector<int>>(sets.roles.size()));
  sets.s_star[0][0] = {0, 1};
  sets.s = sets.s_star;
  TrainState state = make_train_state(net, cfg);
  Rng rng(2);
  const UpdateRecord rec = sgd_step(state, make_batch(cfg, dict, rng), cfg);
  EXPECT_GT(rec.delta_w.row(0).norm(), 0.0);
  EXPECT_EQ(*check_update_coherence(rec, sets).channel[0], 0.0);
  EXPECT_EQ(*cumulative_drift(state.net, net, sets).channel[0], 0.0);
}

TEST(Nonactivation, DeadNetHasNoViolations) {
  const ExperimentConfig cfg = tiny_config();
  const auto dict = basis(cfg);
  Network net = make_empty_network(cfg, Granularity::Coarse);
  net.biases().setConstant(-0.1);
  const NeuronSets sets = identify_neuron_sets(net, dict, cfg, tau_of(cfg));
  Rng rng(1);
  std::vector<Sample> samples;
  for (int i = 0; i < 50; ++i) samples.push_back(sample_easy(cfg, dict, {Sign::Plus, 1}, rng));
  const auto rep = nonactivation_diagnostic(net, dict, sets, samples);
  EXPECT_GT(rep.feature_events, 0);
  EXPECT_GT(rep.noise_events, 0);
  EXPECT_EQ(rep.feature_rate(), 0.0);
  EXPECT_EQ(rep.noise_rate(), 0.0);
}

TEST(Nonactivation, LouderNoiseRaisesRates) {
  ExperimentConfig cfg = desk_preset().experiment;
  const auto dict = basis(cfg);
  Rng rng(4);
  const Network net = init_network(cfg, Granularity::Coarse, rng);
  const NeuronSets sets = identify_neuron_sets(net, dict, cfg, tau_of(cfg));
  auto rates = [&](double sigma_zeta) {
    ExperimentConfig loud = cfg;
    loud.sigma_zeta = sigma_zeta;
    Rng srng(5);
    std::vector<Sample> samples;
    for (int i = 0; i < 100; ++i) samples.push_back(sample_easy(loud, dict, {Sign::Minus, 1 + i % 8}, srng));
    return nonactivation_diagnostic(net, dict, sets, samples);
  };
  const auto quiet = rates(cfg.sigma_zeta);
  const auto loud = rates(100 * cfg.sigma_zeta);
  EXPECT_LE(quiet.noise_rate(), 0.01);
  EXPECT_GT(loud.noise_rate(), quiet.noise_rate());
  EXPECT_GT(loud.feature_rate(), quiet.feature_rate());
}

TEST(Trajectory, RecorderChannelsAndCsv) {
  const ExperimentConfig cfg = desk_preset().experiment;
  const auto dict = basis(cfg);
  Rng rng(6);
  const Network net0 = init_network(cfg, Granularity::Coarse, rng);
  TrajectoryRecorder rec(dict, identify_neuron_sets(net0, dict, cfg, tau_of(cfg)));
  train(cfg, dict, net0, StopRule::steps(5), quiet_options(), 3, rec.hooks(2));
  const Trajectory& traj = rec.trajectory();
  const Channel* a = traj.find(ChannelKind::A, "+", "v+");
  ASSERT_NE(a, nullptr);
  EXPECT_EQ(a->steps, (std::vector<long>{0, 2, 4, 5}));
  const Channel* loss = traj.find(ChannelKind::Loss, "");
  ASSERT_NE(loss, nullptr);
  EXPECT_EQ(loss->steps.size(), 5u);
  for (const auto& ch : traj.channels) {
    for (std::size_t i = 1; i < ch.steps.size(); ++i) EXPECT_LT(ch.steps[i - 1], ch.steps[i]);
  }
  std::ostringstream out;
  write_trajectory_csv(traj, out);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "step,channel_kind,class,feature_role,value");
  long rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    EXPECT_EQ(std::count(line.begin(), line.end(), ','), 4);
  }
  long expect = 0;
  for (const auto& ch : traj.channels) expect += static_cast<long>(ch.values.size());
  EXPECT_EQ(rows, expect);
}

TEST(LogFit, RecoversOwnModel) {
  const double C = 0.5 * 4 / (2.0 * 8 * 64);
  std::vector<long> steps;
  std::vector<double> values;
  for (long t = 100; t <= 3000; t += 10) {
    steps.push_back(t);
    values.push_back(std::log(C * (t - 100) + 5.0));
  }
  const LogFitResult fit = fit_log_growth(steps, values, 100, C);
  EXPECT_NEAR(fit.t0, 5.0, 1e-6);
  EXPECT_NEAR(fit.a, 1.0, 1e-6);
  EXPECT_NEAR(fit.b, 0.0, 1e-6);
  EXPECT_GE(fit.r_squared, 1.0 - 1e-9);
  EXPECT_EQ(fit.T11, 100);
  EXPECT_EQ(fit.points, static_cast<long>(steps.size()));
}

TEST(LogFit, ConfigConstant) {
  const ExperimentConfig cfg = desk_preset().experiment;
  std::vector<long> steps;
  std::vector<double> values;
  for (long t = 0; t < 40; ++t) {
    steps.push_back(t);
    values.push_back(2.0 * std::log(0.5 * 4 / (2.0 * 8 * 64) * t + 0.3) - 1.0);
  }
  const LogFitResult fit = fit_log_growth(steps, values, 0, cfg);
  EXPECT_DOUBLE_EQ(fit.C, 0.5 * 4 / (2.0 * 8 * 64));
  EXPECT_NEAR(fit.a, 2.0, 1e-6);
  EXPECT_NEAR(fit.b, -1.0, 1e-5);
}

TEST(LogFit, LinearDataNeedsDegenerateOffset) {
  // A free scale lets a log with a huge offset mimic a straight line, so linear
  // data shows up as an offset pinned to the end of the search range rather
  // than as a poor r^2.
  const double C = 0.5 * 4 / (2.0 * 8 * 64);
  std::vector<long> steps;
  std::vector<double> lin, logd;
  for (long t = 0; t <= 3000; t += 10) {
    steps.push_back(t);
    lin.push_back(0.002 * t);
    logd.push_back(std::log(C * t + 5.0));
  }
  const LogFitResult a = fit_log_growth(steps, lin, 0, C);
  const LogFitResult b = fit_log_growth(steps, logd, 0, C);
  EXPECT_GT(a.t0, 1e4 * C * 3000);
  EXPECT_LT(b.t0, 10.0);
  EXPECT_GE(b.r_squared, a.r_squared);
}

TEST(LogFit, Degenerate) {
  std::vector<long> steps(30);
  std::iota(steps.begin(), steps.end(), 0L);
  EXPECT_THROW(fit_log_growth(steps, std::vector<double>(30, 1.0), 0, 0.01), FitDegenerate);
  std::vector<long> few(10);
  std::iota(few.begin(), few.end(), 0L);
  std::vector<double> vals(10);
  std::iota(vals.begin(), vals.end(), 0.0);
  EXPECT_THROW(fit_log_growth(few, vals, 0, 0.01), FitDegenerate);
  // Points before T11 do not count.
  EXPECT_THROW(fit_log_growth(steps, std::vector<double>(steps.begin(), steps.end()), 15, 0.01), FitDegenerate);
}

TEST(Ratio, IdenticalChannelsGiveOne) {
  ExperimentConfig cfg = tiny_config();
  const auto dict = basis(cfg);
  NeuronSets sets;
  sets.granularity = Granularity::Coarse;
  sets.classes = {ClassId{Sign::Plus, 0}, ClassId{Sign::Minus, 0}};
  sets.roles = dict.roles();
  Trajectory traj;
  for (const char* role : {"v+", "v+:1", "v+:2"}) {
    auto& ch = traj.get_or_add(ChannelKind::A, "+", role);
    ch.steps = {0, 10, 20};
    ch.values = {0.1, 0.5, 2.0};
  }
  const RatioProfile prof = ratio_profile(traj, sets);
  ASSERT_EQ(prof.subclasses, 2);
  for (const auto& s : prof.series) {
    for (double r : s.ratio) EXPECT_DOUBLE_EQ(r, 1.0);
    EXPECT_DOUBLE_EQ(s.delta_ratio.back(), 1.0);
  }
  EXPECT_DOUBLE_EQ(prof.end_ratio, 1.0);
}

TEST(Ratio, ZeroDenominatorFlagged) {
  NeuronSets sets;
  sets.granularity = Granularity::Fine;
  sets.classes = {ClassId{Sign::Plus, 1}, ClassId{Sign::Minus, 1}};
  sets.roles = {FeatureRole::common(Sign::Plus), FeatureRole::sub(Sign::Plus, 1)};
  Trajectory traj;
  auto& common = traj.get_or_add(ChannelKind::A, "+:1", "v+");
  common.steps = {0, 1};
  common.values = {0.0, 2.0};
  auto& fine = traj.get_or_add(ChannelKind::A, "+:1", "v+:1");
  fine.steps = {0, 1};
  fine.values = {1.0, 1.0};
  const RatioProfile prof = ratio_profile(traj, sets);
  ASSERT_EQ(prof.subclasses, 1);
  EXPECT_TRUE(prof.series[0].flagged[0]);
  EXPECT_FALSE(prof.series[0].flagged[1]);
  EXPECT_DOUBLE_EQ(prof.end_ratio, 0.5);
}

TEST(Rates, WilsonInterval) {
  const RateEstimate r = make_rate(50, 100);
  EXPECT_DOUBLE_EQ(r.rate, 0.5);
  EXPECT_NEAR(r.lo, 0.4038, 1e-4);
  EXPECT_NEAR(r.hi, 0.5962, 1e-4);
  const RateEstimate zero = make_rate(0, 1000);
  EXPECT_EQ(zero.lo, 0.0);
  EXPECT_EQ(make_rate(1000, 1000).hi, 1.0);
  EXPECT_NEAR(zero.hi, 0.00383, 1e-5);
  const RateEstimate big = make_rate(5000, 10000);
  EXPECT_LT(big.hi - big.lo, r.hi - r.lo);
}

TEST(Evaluate, ZeroNetErrsOnHalf) {
  const ExperimentConfig cfg = desk_preset().experiment;
  const auto dict = basis(cfg);
  for (auto g : {Granularity::Coarse, Granularity::Fine}) {
    Rng rng(7);
    const ErrorReport rep = evaluate_error(make_empty_network(cfg, g), cfg, dict, 2000, 2000, rng);
    EXPECT_EQ(rep.easy.rate, 0.5);
    EXPECT_EQ(rep.hard.rate, 0.5);
    EXPECT_EQ(rep.easy.mistakes, 1000);
    EXPECT_EQ(rep.easy_confusion[0][1], 1000);
    EXPECT_EQ(rep.easy_confusion[1][1], 1000);
    EXPECT_EQ(rep.easy_subclass_accuracy.has_value(), g == Granularity::Fine);
  }
}

TEST(Evaluate, DetectorNetIsPerfectOnEasy) {
  ExperimentConfig cfg = desk_preset().experiment;
  cfg.sigma_zeta = 1e-6;
  cfg.sigma_zeta_star = 1e-6;
  const auto dict = basis(cfg);
  Network net = make_empty_network(cfg, Granularity::Coarse);
  net.biases().setConstant(-1.0);
  net.weights().row(0) = dict.vector(FeatureRole::common(Sign::Plus));
  net.weights().row(cfg.m) = dict.vector(FeatureRole::common(Sign::Minus));
  net.biases()(0) = net.biases()(cfg.m) = -0.5;
  Rng rng(8);
  const ErrorReport rep = evaluate_error(net, cfg, dict, 1000, 10, rng);
  // Easy samples without any common patch are ties, counted against "+".
  EXPECT_LE(rep.easy.rate, 0.02);
  EXPECT_EQ(rep.easy_confusion[1][0], 0);
  EXPECT_EQ(rep.easy.mistakes, rep.easy_confusion[0][1]);
}

TEST(Json, Schemas) {
  const ExperimentConfig cfg = tiny_config();
  Rng rng(1);
  const auto dict = basis(cfg);
  const Network net = init_network(cfg, Granularity::Coarse, rng);
  const auto js = to_json(identify_neuron_sets(net, dict, cfg, tau_of(cfg)));
  EXPECT_EQ(js.at("schema_version"), kSchemaVersion);
  Rng erng(2);
  const auto je = to_json(evaluate_error(net, cfg, dict, 10, 10, erng));
  EXPECT_EQ(je.at("schema_version"), kSchemaVersion);
  EXPECT_TRUE(je.contains("easy_error"));
  EXPECT_TRUE(je.contains("hard_error"));
}
