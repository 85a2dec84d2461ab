#include "granlab/oracles.hpp"

#include <cmath>
#include <limits>

namespace granlab::oracle {

Eigen::VectorXd naive_forward(const Network& net, const RowMatrix& patches) {
  Eigen::VectorXd F = Eigen::VectorXd::Zero(net.class_count());
  for (int c = 0; c < net.class_count(); ++c) {
    for (int r = net.first_neuron(c); r < net.first_neuron(c) + net.neurons_in(c); ++r) {
      for (Eigen::Index p = 0; p < patches.rows(); ++p) {
        double z = net.biases()(r);
        for (Eigen::Index i = 0; i < patches.cols(); ++i) z += net.weights()(r, i) * patches(p, i);
        if (z > 0.0) F(c) += Network::head() * z;
      }
    }
  }
  return F;
}

double naive_loss(const Network& net, const Batch& batch) {
  double total = 0.0;
  for (int n = 0; n < batch.size(); ++n) {
    const Eigen::VectorXd F = naive_forward(net, batch.samples[n].patches);
    const int y = net.target_class(batch.labels_fine[n]);
    double top = F.maxCoeff();
    double sum = 0.0;
    for (Eigen::Index c = 0; c < F.size(); ++c) sum += std::exp(F(c) - top);
    total += top + std::log(sum) - F(y);
  }
  return total / batch.size();
}

RowMatrix fd_weight_gradient(const Network& net, const Batch& batch, double h) {
  Network probe = net;
  RowMatrix grad(net.neuron_count(), net.dim());
  for (int r = 0; r < net.neuron_count(); ++r) {
    for (int i = 0; i < net.dim(); ++i) {
      const double w = net.weights()(r, i);
      probe.weights()(r, i) = w + h;
      const double up = naive_loss(probe, batch);
      probe.weights()(r, i) = w - h;
      const double down = naive_loss(probe, batch);
      probe.weights()(r, i) = w;
      grad(r, i) = (up - down) / (2.0 * h);
    }
  }
  return grad;
}

double min_abs_preactivation(const Network& net, const Batch& batch) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& x : batch.samples) {
    const RowMatrix z = (x.patches * net.weights().transpose()).rowwise() + net.biases().transpose();
    best = std::min(best, z.cwiseAbs().minCoeff());
  }
  return best;
}

}  // namespace granlab::oracle
