#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "granlab/config.hpp"
#include "granlab/rng.hpp"

namespace granlab {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Superclass sign: +1 or -1.
enum class Sign : int { Plus = 1, Minus = -1 };

constexpr int sign_value(Sign s) { return static_cast<int>(s); }
constexpr Sign opposite(Sign s) { return s == Sign::Plus ? Sign::Minus : Sign::Plus; }

// Subclass label (sign, c) with c in [1, k].
struct SubclassLabel {
  Sign sign = Sign::Plus;
  int index = 1;
  bool operator==(const SubclassLabel&) const = default;
};

// A feature role within the dictionary. subclass == 0 means the common feature.
struct FeatureRole {
  Sign sign = Sign::Plus;
  int subclass = 0;

  static FeatureRole common(Sign s) { return {s, 0}; }
  static FeatureRole sub(Sign s, int c) { return {s, c}; }
  bool is_common() const { return subclass == 0; }
  // "v+", "v-", "v+:3", "v-:3".
  std::string name() const;
  bool operator==(const FeatureRole&) const = default;
};

class DictionaryError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Orthonormal dictionary; rows of `vectors` are v_1..v_d. Roles occupy the
// first 2 + k+ + k- rows: v+, v-, v+:1..k+, v-:1..k-.
class FeatureDictionary {
 public:
  FeatureDictionary(RowMatrix vectors, int k_plus, int k_minus);

  int dim() const { return static_cast<int>(vectors_.rows()); }
  int k_plus() const { return k_plus_; }
  int k_minus() const { return k_minus_; }
  const RowMatrix& vectors() const { return vectors_; }
  auto vector(int index) const { return vectors_.row(index); }

  int index_of(const FeatureRole& role) const;
  auto vector(const FeatureRole& role) const { return vectors_.row(index_of(role)); }
  // All assigned roles in index order.
  std::vector<FeatureRole> roles() const;
  int assigned_count() const { return 2 + k_plus_ + k_minus_; }

  // max_{i,j} |<v_i, v_j> - delta_ij|.
  double orthonormality_error() const;

 private:
  RowMatrix vectors_;
  int k_plus_;
  int k_minus_;
};

FeatureDictionary build_dictionary(const ExperimentConfig& cfg, DictionaryMode mode, Rng& rng);

enum class PatchKind { CommonFeature, SubclassFeature, FeatureNoise, LargeNoise, Noise };

enum class Difficulty { Easy, Hard };

struct Sample {
  RowMatrix patches;  // P x d
  Sign superclass = Sign::Plus;
  std::optional<int> subclass;
  std::vector<PatchKind> patch_kinds;
  // alpha_p for feature patches, alpha_p^dagger for feature-noise patches, 0 otherwise.
  std::vector<double> alphas;
  Difficulty difficulty = Difficulty::Easy;

  int count(PatchKind kind) const;
  SubclassLabel label() const { return {superclass, subclass.value_or(0)}; }
};

class SamplingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

Sample sample_easy(const ExperimentConfig& cfg, const FeatureDictionary& dict,
                   SubclassLabel label, Rng& rng);

// Throws SamplingError when subclass and feature-noise patches leave no noise
// patch for the large-noise draw.
Sample sample_hard(const ExperimentConfig& cfg, const FeatureDictionary& dict,
                   SubclassLabel label, Rng& rng);

}  // namespace granlab
