#pragma once

#include "granlab/config.hpp"
#include "granlab/data.hpp"
#include "granlab/network.hpp"
#include "granlab/rng.hpp"

namespace granlab::testing {

// Small enough for exhaustive checks, large enough for nonempty neuron sets.
inline ExperimentConfig tiny_config() {
  ExperimentConfig cfg;
  cfg.d = 16;
  cfg.P = 8;
  cfg.k_plus = cfg.k_minus = 2;
  cfg.s_star = 2;
  cfg.s_dagger = 1;
  cfg.N = 16;
  cfg.m = 4;
  cfg.m_sub = 2;
  cfg.sigma_0 = 0.3;
  cfg.c_b_coarse = 1.0;
  cfg.c_b_fine = 1.0;
  return cfg;
}

inline FeatureDictionary basis(const ExperimentConfig& cfg) {
  Rng rng(1);
  return build_dictionary(cfg, DictionaryMode::StandardBasis, rng);
}

inline Network random_network(const ExperimentConfig& cfg, Granularity g, std::uint64_t seed) {
  Rng rng(seed);
  Network net = make_empty_network(cfg, g);
  for (int r = 0; r < net.neuron_count(); ++r) {
    for (int j = 0; j < net.dim(); ++j) net.weights()(r, j) = rng.normal();
    net.biases()(r) = rng.normal(0.5);
  }
  return net;
}

}  // namespace granlab::testing
