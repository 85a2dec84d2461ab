#include "granlab/data.hpp"

#include <algorithm>
#include <cmath>

namespace granlab {

std::string FeatureRole::name() const {
  std::string s = sign == Sign::Plus ? "v+" : "v-";
  if (!is_common()) s += ":" + std::to_string(subclass);
  return s;
}

FeatureDictionary::FeatureDictionary(RowMatrix vectors, int k_plus, int k_minus)
    : vectors_(std::move(vectors)), k_plus_(k_plus), k_minus_(k_minus) {
  if (vectors_.rows() != vectors_.cols()) {
    throw DictionaryError("dictionary must be square");
  }
  if (vectors_.rows() < 2 + k_plus_ + k_minus_) {
    throw DictionaryError("dimension too small: d=" + std::to_string(vectors_.rows()) +
                          " < 2+k+ +k-=" + std::to_string(2 + k_plus_ + k_minus_));
  }
}

int FeatureDictionary::index_of(const FeatureRole& role) const {
  if (role.is_common()) return role.sign == Sign::Plus ? 0 : 1;
  const int k = role.sign == Sign::Plus ? k_plus_ : k_minus_;
  if (role.subclass < 1 || role.subclass > k) {
    throw DictionaryError("subclass index out of range: " + role.name());
  }
  return role.sign == Sign::Plus ? 1 + role.subclass : 1 + k_plus_ + role.subclass;
}

std::vector<FeatureRole> FeatureDictionary::roles() const {
  std::vector<FeatureRole> out;
  out.reserve(assigned_count());
  out.push_back(FeatureRole::common(Sign::Plus));
  out.push_back(FeatureRole::common(Sign::Minus));
  for (int c = 1; c <= k_plus_; ++c) out.push_back(FeatureRole::sub(Sign::Plus, c));
  for (int c = 1; c <= k_minus_; ++c) out.push_back(FeatureRole::sub(Sign::Minus, c));
  return out;
}

double FeatureDictionary::orthonormality_error() const {
  const RowMatrix gram = vectors_ * vectors_.transpose();
  return (gram - RowMatrix::Identity(dim(), dim())).cwiseAbs().maxCoeff();
}

FeatureDictionary build_dictionary(const ExperimentConfig& cfg, DictionaryMode mode, Rng& rng) {
  const int roles = 2 + cfg.k_plus + cfg.k_minus;
  if (cfg.d < roles) {
    throw DictionaryError("dimension too small: d=" + std::to_string(cfg.d) +
                          " < 2+k+ +k-=" + std::to_string(roles));
  }
  const int d = cfg.d;
  if (mode == DictionaryMode::StandardBasis) {
    return FeatureDictionary(RowMatrix::Identity(d, d), cfg.k_plus, cfg.k_minus);
  }
  // QR of a Gaussian matrix with the sign fix on R's diagonal is Haar-distributed.
  Eigen::MatrixXd g(d, d);
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j) g(i, j) = rng.normal();
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ();
  const Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int j = 0; j < d; ++j) {
    if (r(j, j) < 0) q.col(j) = -q.col(j);
  }
  // Columns of q are orthonormal; store them as rows.
  return FeatureDictionary(q.transpose(), cfg.k_plus, cfg.k_minus);
}

int Sample::count(PatchKind kind) const {
  return static_cast<int>(std::count(patch_kinds.begin(), patch_kinds.end(), kind));
}

namespace {

void check_label(const ExperimentConfig& cfg, SubclassLabel label) {
  const int k = label.sign == Sign::Plus ? cfg.k_plus : cfg.k_minus;
  if (label.index < 1 || label.index > k) {
    throw SamplingError("subclass index out of range: " + std::to_string(label.index));
  }
}

// Bernoulli placement of common-feature and subclass-feature patches.
std::vector<PatchKind> place_features(const ExperimentConfig& cfg, Rng& rng) {
  const int P = cfg.P;
  std::vector<PatchKind> kinds(P, PatchKind::Noise);
  const double p_common = static_cast<double>(cfg.s_star) / P;
  int n_common = 0;
  for (int p = 0; p < P; ++p) {
    if (rng.bernoulli(p_common)) {
      kinds[p] = PatchKind::CommonFeature;
      ++n_common;
    }
  }
  const int rest = P - n_common;
  if (rest > 0) {
    const double p_sub = std::min(1.0, static_cast<double>(cfg.s_star) / rest);
    for (int p = 0; p < P; ++p) {
      if (kinds[p] == PatchKind::Noise && rng.bernoulli(p_sub)) kinds[p] = PatchKind::SubclassFeature;
    }
  }
  return kinds;
}

void fill_noise(Sample& s, const ExperimentConfig& cfg, Rng& rng) {
  const int d = cfg.d;
  s.patches.resize(cfg.P, d);
  for (int p = 0; p < cfg.P; ++p) {
    const double sd = s.patch_kinds[p] == PatchKind::LargeNoise ? cfg.sigma_zeta_star : cfg.sigma_zeta;
    for (int i = 0; i < d; ++i) s.patches(p, i) = rng.normal(sd);
  }
}

}  // namespace

Sample sample_easy(const ExperimentConfig& cfg, const FeatureDictionary& dict, SubclassLabel label,
                   Rng& rng) {
  check_label(cfg, label);
  Sample s;
  s.superclass = label.sign;
  s.subclass = label.index;
  s.difficulty = Difficulty::Easy;
  s.patch_kinds = place_features(cfg, rng);
  s.alphas.assign(cfg.P, 0.0);
  const double lo = std::sqrt(1.0 - cfg.iota);
  const double hi = std::sqrt(1.0 + cfg.iota);
  for (int p = 0; p < cfg.P; ++p) {
    if (s.patch_kinds[p] != PatchKind::Noise) s.alphas[p] = rng.uniform(lo, hi);
  }
  fill_noise(s, cfg, rng);
  const auto common = dict.vector(FeatureRole::common(label.sign));
  const auto sub = dict.vector(FeatureRole::sub(label.sign, label.index));
  for (int p = 0; p < cfg.P; ++p) {
    if (s.patch_kinds[p] == PatchKind::CommonFeature) {
      s.patches.row(p) += s.alphas[p] * common;
    } else if (s.patch_kinds[p] == PatchKind::SubclassFeature) {
      s.patches.row(p) += s.alphas[p] * sub;
    }
  }
  return s;
}

Sample sample_hard(const ExperimentConfig& cfg, const FeatureDictionary& dict, SubclassLabel label,
                   Rng& rng) {
  check_label(cfg, label);
  Sample s;
  s.superclass = label.sign;
  s.subclass = label.index;
  s.difficulty = Difficulty::Hard;
  s.patch_kinds = place_features(cfg, rng);
  for (auto& k : s.patch_kinds) {
    if (k == PatchKind::CommonFeature) k = PatchKind::Noise;
  }
  const int n_sub = s.count(PatchKind::SubclassFeature);
  const int rest = cfg.P - n_sub;
  if (rest > 0) {
    const double p_fn = std::min(1.0, static_cast<double>(cfg.s_dagger) / rest);
    for (int p = 0; p < cfg.P; ++p) {
      if (s.patch_kinds[p] == PatchKind::Noise && rng.bernoulli(p_fn)) {
        s.patch_kinds[p] = PatchKind::FeatureNoise;
      }
    }
  }
  std::vector<int> noise_slots;
  for (int p = 0; p < cfg.P; ++p) {
    if (s.patch_kinds[p] == PatchKind::Noise) noise_slots.push_back(p);
  }
  if (noise_slots.empty()) {
    throw SamplingError("no room for the large-noise patch: all patches carry features");
  }
  const auto star = noise_slots[rng.uniform_int(0, static_cast<long>(noise_slots.size()) - 1)];
  s.patch_kinds[star] = PatchKind::LargeNoise;

  s.alphas.assign(cfg.P, 0.0);
  const double lo = std::sqrt(1.0 - cfg.iota);
  const double hi = std::sqrt(1.0 + cfg.iota);
  for (int p = 0; p < cfg.P; ++p) {
    if (s.patch_kinds[p] == PatchKind::SubclassFeature) {
      s.alphas[p] = rng.uniform(lo, hi);
    } else if (s.patch_kinds[p] == PatchKind::FeatureNoise) {
      s.alphas[p] = rng.uniform(cfg.iota_dag_lower, cfg.iota_dag_upper);
    }
  }
  fill_noise(s, cfg, rng);
  const auto sub = dict.vector(FeatureRole::sub(label.sign, label.index));
  const auto distractor = dict.vector(FeatureRole::common(opposite(label.sign)));
  for (int p = 0; p < cfg.P; ++p) {
    if (s.patch_kinds[p] == PatchKind::SubclassFeature) {
      s.patches.row(p) += s.alphas[p] * sub;
    } else if (s.patch_kinds[p] == PatchKind::FeatureNoise) {
      s.patches.row(p) += s.alphas[p] * distractor;
    }
  }
  return s;
}

}  // namespace granlab
