#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "granlab/config.hpp"
#include "granlab/data.hpp"
#include "granlab/rng.hpp"

namespace granlab {

// Output class. Coarse classes have subclass == 0.
struct ClassId {
  Sign sign = Sign::Plus;
  int subclass = 0;

  // "+", "-", "+:3", "-:3".
  std::string name() const;
  bool operator==(const ClassId&) const = default;
};

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Two-layer average-pooling convolutional ReLU network with one disjoint
// neuron group per class and the output head frozen at 1:
//   F_c(X) = sum_r sum_p relu(<w_{c,r}, x_p> + b_{c,r}).
// Neurons of all classes are stacked class by class in one weight matrix.
class Network {
 public:
  Network(Granularity granularity, int d, std::vector<ClassId> classes,
          std::vector<int> neurons_per_class);

  Granularity granularity() const { return granularity_; }
  int dim() const { return d_; }
  int class_count() const { return static_cast<int>(classes_.size()); }
  const std::vector<ClassId>& classes() const { return classes_; }
  const ClassId& class_id(int c) const { return classes_[c]; }
  int class_index(const ClassId& id) const;
  // Class of the sample's label under this network's label view.
  int target_class(const SubclassLabel& label) const;

  int neuron_count() const { return static_cast<int>(weights_.rows()); }
  int neurons_in(int c) const { return offsets_[c + 1] - offsets_[c]; }
  int first_neuron(int c) const { return offsets_[c]; }
  int class_of_neuron(int neuron) const { return neuron_class_[neuron]; }

  const RowMatrix& weights() const { return weights_; }
  RowMatrix& weights() { return weights_; }
  const Eigen::VectorXd& biases() const { return biases_; }
  Eigen::VectorXd& biases() { return biases_; }
  // Second-layer weight a_{c,r}; frozen.
  static constexpr double head() { return 1.0; }

  bool operator==(const Network& other) const;

 private:
  Granularity granularity_;
  int d_;
  std::vector<ClassId> classes_;
  std::vector<int> offsets_;
  std::vector<int> neuron_class_;
  RowMatrix weights_;
  Eigen::VectorXd biases_;
};

// Class list and per-class width for a granularity under cfg.
Network make_empty_network(const ExperimentConfig& cfg, Granularity granularity);

double initial_bias(const ExperimentConfig& cfg, Granularity granularity);

// w ~ N(0, sigma_0^2 I); b = -sigma_0 c_b sqrt(log d).
Network init_network(const ExperimentConfig& cfg, Granularity granularity, Rng& rng);

struct Activations {
  Eigen::VectorXd F;  // pre-logit per class
  // P x neurons pre-activations z = <w, x_p> + b; empty when not retained.
  RowMatrix pre;

  bool has_pre() const { return pre.size() > 0; }
  bool active(int p, int neuron) const { return pre(p, neuron) > 0.0; }
};

// ReLU'(0) is taken as 0: a neuron with z == 0 is inactive.
Activations forward(const Network& net, const Sample& x, bool keep_pre = true);
Activations forward(const Network& net, const RowMatrix& patches, bool keep_pre = true);

// Softmax with max subtraction.
Eigen::VectorXd logits(const Eigen::VectorXd& F);
Eigen::VectorXd logits(const Activations& acts);

// Ties resolve to the minus superclass.
Sign coarse_predict(const Network& net, const Eigen::VectorXd& F);
Sign coarse_predict(const Network& net, const Sample& x);
// +1 iff max_c F_{+,c} > max_c F_{-,c}.
Sign fine_predict_binary(const Network& net, const Eigen::VectorXd& F);
Sign fine_predict_binary(const Network& net, const Sample& x);
// Superclass prediction under the network's own granularity.
Sign predict_superclass(const Network& net, const Eigen::VectorXd& F);
// Argmax class, lowest index on ties. Diagnostic only.
int predict_class(const Eigen::VectorXd& F);

// One (patch row, neuron) pair with positive pre-activation.
struct ActiveEntry {
  int row;
  int neuron;
  double z;
};

// Forward pass over many samples stacked as rows (sample n owns rows
// [n P, (n+1) P)). Pre-activations are screened in single precision with a
// rounding-error bound and every surviving candidate is recomputed in double,
// so the active set and F match the double-precision definition.
struct BatchForward {
  Eigen::MatrixXd F;                 // samples x classes
  std::vector<ActiveEntry> active;   // ordered by row, then neuron
};

BatchForward forward_batch(const Network& net, const RowMatrix& stacked, int P);

// Binary snapshot: magic, granularity, d, class list with widths, then
// row-major little-endian float64 weights, then biases.
void write_network(const Network& net, std::ostream& out);
Network read_network(std::istream& in);
void save_network(const Network& net, const std::string& path);
Network load_network(const std::string& path);

}  // namespace granlab
