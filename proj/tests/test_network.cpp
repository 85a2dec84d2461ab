#include <cmath>
#include <limits>
#include <cstring>
#include <sstream>

#include <gtest/gtest.h>

#include "granlab/network.hpp"
#include "granlab/oracles.hpp"
#include "granlab/probes.hpp"
#include "support.hpp"

using namespace granlab;
using granlab::testing::basis;
using granlab::testing::random_network;
using granlab::testing::tiny_config;

namespace {

// One neuron per assigned feature, weight = feature, bias -0.5. Coarse nets
// get the common feature of their sign first; other neurons stay dead.
Network detector_net(const ExperimentConfig& cfg, const FeatureDictionary& dict, Granularity g) {
  Network net = make_empty_network(cfg, g);
  net.biases().setConstant(-1e9);
  for (int c = 0; c < net.class_count(); ++c) {
    const ClassId& id = net.class_id(c);
    const int r = net.first_neuron(c);
    const FeatureRole role = id.subclass == 0 ? FeatureRole::common(id.sign) : FeatureRole::sub(id.sign, id.subclass);
    net.weights().row(r) = dict.vector(role);
    net.biases()(r) = -0.5;
  }
  return net;
}

}  // namespace

TEST(Init, ShapesAndBias) {
  const ExperimentConfig cfg = tiny_config();
  Rng rng(3);
  const Network coarse = init_network(cfg, Granularity::Coarse, rng);
  EXPECT_EQ(coarse.class_count(), 2);
  EXPECT_EQ(coarse.neuron_count(), 2 * cfg.m);
  EXPECT_EQ(coarse.class_id(0).name(), "+");
  EXPECT_EQ(coarse.class_id(1).name(), "-");
  const Network fine = init_network(cfg, Granularity::Fine, rng);
  EXPECT_EQ(fine.class_count(), 4);
  EXPECT_EQ(fine.neuron_count(), 4 * cfg.m_sub);
  EXPECT_EQ(fine.class_id(1).name(), "+:2");
  EXPECT_EQ(fine.class_id(2).name(), "-:1");
  EXPECT_EQ(fine.class_of_neuron(fine.first_neuron(3)), 3);
  for (int r = 0; r < coarse.neuron_count(); ++r) {
    EXPECT_EQ(coarse.biases()(r), initial_bias(cfg, Granularity::Coarse));
  }
}

TEST(Init, BiasArithmetic) {
  ExperimentConfig cfg = tiny_config();
  cfg.d = 7;  // log 7 = 1.9459...
  cfg.k_plus = cfg.k_minus = 2;
  cfg.sigma_0 = 0.1;
  cfg.c_b_coarse = 2.0;
  EXPECT_NEAR(initial_bias(cfg, Granularity::Coarse), -0.2 * std::sqrt(std::log(7.0)), 1e-15);
  EXPECT_NEAR(initial_bias(cfg, Granularity::Coarse), -0.27899, 1e-5);
}

TEST(Init, ZeroScale) {
  ExperimentConfig cfg = tiny_config();
  cfg.sigma_0 = 0.0;
  Rng rng(1);
  const Network net = init_network(cfg, Granularity::Fine, rng);
  EXPECT_EQ(net.weights().cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(net.biases().cwiseAbs().maxCoeff(), 0.0);
}

TEST(Init, Deterministic) {
  const ExperimentConfig cfg = desk_preset().experiment;
  Rng a(17), b(17);
  EXPECT_EQ(init_network(cfg, Granularity::Coarse, a), init_network(cfg, Granularity::Coarse, b));
}

TEST(Forward, ZeroWeightsNegativeBias) {
  const ExperimentConfig cfg = tiny_config();
  Network net = make_empty_network(cfg, Granularity::Coarse);
  net.biases().setConstant(-0.1);
  Rng rng(2);
  const Sample s = sample_easy(cfg, basis(cfg), {Sign::Plus, 1}, rng);
  const auto acts = forward(net, s);
  EXPECT_EQ(acts.F.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Forward, CountsNoiselessCommonPatches) {
  ExperimentConfig cfg = tiny_config();
  cfg.sigma_zeta = 0.0;
  cfg.iota = 0.0;
  const auto dict = basis(cfg);
  Network net = make_empty_network(cfg, Granularity::Coarse);
  net.biases().setConstant(-1.0);
  net.weights().row(0) = dict.vector(FeatureRole::common(Sign::Plus));
  net.biases()(0) = 0.0;
  Rng rng(5);
  for (int i = 0; i < 30; ++i) {
    const Sample s = sample_easy(cfg, dict, {Sign::Plus, 1}, rng);
    EXPECT_EQ(forward(net, s).F(0), s.count(PatchKind::CommonFeature));
  }
}

TEST(Forward, MatchesNaiveOracleAndKeepsPreactivations) {
  const ExperimentConfig cfg = tiny_config();
  const auto dict = basis(cfg);
  Rng rng(6);
  for (int i = 0; i < 100; ++i) {
    const Network net = random_network(cfg, i % 2 ? Granularity::Fine : Granularity::Coarse, 100 + i);
    const Sample s = sample_easy(cfg, dict, {Sign::Minus, 1 + i % 2}, rng);
    const auto acts = forward(net, s);
    const Eigen::VectorXd ref = oracle::naive_forward(net, s.patches);
    EXPECT_LE((acts.F - ref).cwiseAbs().maxCoeff(), 1e-12);
    double total = 0.0;
    for (int p = 0; p < cfg.P; ++p) {
      for (int r = 0; r < net.neuron_count(); ++r) total += std::max(0.0, acts.pre(p, r));
    }
    EXPECT_NEAR(total, acts.F.sum(), 1e-12);
  }
}

TEST(Forward, BatchMatchesSingle) {
  const ExperimentConfig cfg = desk_preset().experiment;
  const auto dict = basis(cfg);
  Rng rng(7);
  Network net = init_network(cfg, Granularity::Coarse, rng);
  // Push some neurons well into the active regime.
  net.weights().topRows(64) *= 40.0;
  std::vector<Sample> samples;
  for (int i = 0; i < 40; ++i) samples.push_back(sample_easy(cfg, dict, {Sign::Plus, 1 + i % 8}, rng));
  const Batch batch = batch_from_samples(samples);
  const BatchForward fb = forward_batch(net, batch.stacked, cfg.P);
  ASSERT_FALSE(fb.active.empty());
  for (int n = 0; n < 40; ++n) {
    const auto acts = forward(net, samples[n]);
    for (int c = 0; c < net.class_count(); ++c) EXPECT_NEAR(fb.F(n, c), acts.F(c), 1e-12 * std::max(1.0, acts.F(c)));
  }
  long count = 0;
  for (int n = 0; n < 40; ++n) {
    const auto acts = forward(net, samples[n]);
    for (int p = 0; p < cfg.P; ++p) {
      for (int r = 0; r < net.neuron_count(); ++r) count += acts.active(p, r);
    }
  }
  EXPECT_EQ(count, static_cast<long>(fb.active.size()));
}

TEST(Forward, DimensionMismatch) {
  const ExperimentConfig cfg = tiny_config();
  const Network net = make_empty_network(cfg, Granularity::Coarse);
  EXPECT_THROW(forward(net, RowMatrix::Zero(cfg.P, cfg.d + 1)), ShapeError);
}

TEST(Logits, Softmax) {
  Eigen::VectorXd F(2);
  F << std::log(3.0), 0.0;
  const Eigen::VectorXd p = logits(F);
  EXPECT_NEAR(p(0), 0.75, 1e-15);
  EXPECT_NEAR(p(1), 0.25, 1e-15);
  Eigen::VectorXd flat = Eigen::VectorXd::Constant(5, 2.5);
  EXPECT_LE((logits(flat) - Eigen::VectorXd::Constant(5, 0.2)).cwiseAbs().maxCoeff(), 1e-15);
  Eigen::VectorXd huge = Eigen::VectorXd::Zero(3);
  huge(1) = 1e6;
  const Eigen::VectorXd q = logits(huge);
  EXPECT_TRUE(q.allFinite());
  EXPECT_GE(q(1), 1.0 - 1e-12);
  EXPECT_NEAR(q.sum(), 1.0, 1e-12);
}

TEST(Predict, CoarseAndTies) {
  const ExperimentConfig cfg = tiny_config();
  const Network net = make_empty_network(cfg, Granularity::Coarse);
  Eigen::VectorXd F(2);
  F << 2.0, 1.0;
  EXPECT_EQ(coarse_predict(net, F), Sign::Plus);
  F << 0.0, 0.0;
  EXPECT_EQ(coarse_predict(net, F), Sign::Minus);
  F << 1.0, 3.0;
  EXPECT_EQ(coarse_predict(net, F), Sign::Minus);
}

TEST(Predict, FineBinaryUsesMax) {
  const ExperimentConfig cfg = tiny_config();
  const Network net = make_empty_network(cfg, Granularity::Fine);
  Eigen::VectorXd F(4);
  F << 0.1, 0.9, 0.5, 0.2;
  EXPECT_EQ(fine_predict_binary(net, F), Sign::Plus);
  F.setZero();
  EXPECT_EQ(fine_predict_binary(net, F), Sign::Minus);
  F << 0.1, 0.2, 0.0, 0.3;
  EXPECT_EQ(fine_predict_binary(net, F), Sign::Minus);
  EXPECT_EQ(predict_class(F), 3);
}

TEST(Predict, ShiftInvariance) {
  const ExperimentConfig cfg = tiny_config();
  const Network coarse = make_empty_network(cfg, Granularity::Coarse);
  const Network fine = make_empty_network(cfg, Granularity::Fine);
  Rng rng(9);
  for (int i = 0; i < 200; ++i) {
    Eigen::VectorXd Fc(2), Ff(4);
    for (int c = 0; c < 2; ++c) Fc(c) = rng.normal();
    for (int c = 0; c < 4; ++c) Ff(c) = rng.normal();
    const double shift = rng.uniform(-10.0, 10.0);
    const Eigen::VectorXd Fc2 = Fc.array() + shift;
    const Eigen::VectorXd Ff2 = Ff.array() + shift;
    EXPECT_EQ(coarse_predict(coarse, Fc), coarse_predict(coarse, Fc2));
    EXPECT_EQ(fine_predict_binary(fine, Ff), fine_predict_binary(fine, Ff2));
    EXPECT_EQ(predict_class(logits(Ff)), predict_class(logits(Ff2)));
  }
}

TEST(Predict, DetectorNetsOnNoiselessSamples) {
  ExperimentConfig cfg = tiny_config();
  cfg.sigma_zeta = 0.0;
  cfg.sigma_zeta_star = 0.0;
  cfg.iota = 0.0;
  cfg.s_star = 3;
  cfg.P = 16;
  const auto dict = basis(cfg);
  const Network coarse = detector_net(cfg, dict, Granularity::Coarse);
  const Network fine = detector_net(cfg, dict, Granularity::Fine);
  Rng rng(10);
  int coarse_mistakes = 0;
  int hard_fine_mistakes = 0;
  int hard_with_sub = 0;
  for (int i = 0; i < 1000; ++i) {
    const SubclassLabel label{i % 2 ? Sign::Minus : Sign::Plus, 1 + (i / 2) % 2};
    const Sample easy = sample_easy(cfg, dict, label, rng);
    if (easy.count(PatchKind::CommonFeature) == 0) continue;
    coarse_mistakes += coarse_predict(coarse, easy) != label.sign;
    const Sample hard = sample_hard(cfg, dict, label, rng);
    if (hard.count(PatchKind::SubclassFeature) == 0) continue;
    ++hard_with_sub;
    hard_fine_mistakes += fine_predict_binary(fine, hard) != label.sign;
  }
  EXPECT_EQ(coarse_mistakes, 0);
  EXPECT_GT(hard_with_sub, 500);
  EXPECT_EQ(hard_fine_mistakes, 0);
}

TEST(Snapshot, RoundTrip) {
  const ExperimentConfig cfg = tiny_config();
  const Network net = random_network(cfg, Granularity::Fine, 4);
  std::stringstream buf;
  write_network(net, buf);
  const Network back = read_network(buf);
  EXPECT_EQ(back, net);
  EXPECT_EQ(back.class_id(3).name(), "-:2");
}

TEST(Snapshot, Layout) {
  const ExperimentConfig cfg = tiny_config();
  const Network net = random_network(cfg, Granularity::Coarse, 5);
  std::stringstream buf;
  write_network(net, buf);
  const std::string bytes = buf.str();
  EXPECT_EQ(bytes.substr(0, 8), "GRNLNET1");
  // Payload ends with the biases as little-endian float64.
  const std::size_t tail = bytes.size() - 8 * net.neuron_count();
  double last;
  std::memcpy(&last, bytes.data() + bytes.size() - 8, 8);
  EXPECT_EQ(last, net.biases()(net.neuron_count() - 1));
  double first_bias;
  std::memcpy(&first_bias, bytes.data() + tail, 8);
  EXPECT_EQ(first_bias, net.biases()(0));
}

TEST(Snapshot, RejectsGarbage) {
  std::stringstream buf("not a network at all");
  EXPECT_ANY_THROW(read_network(buf));
}
