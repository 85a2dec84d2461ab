#pragma once

#include <Eigen/Dense>

#include "granlab/network.hpp"
#include "granlab/sgd.hpp"

// Slow reference implementations used only to check the fast paths.
namespace granlab::oracle {

// Triple loop over classes, neurons, patches and coordinates.
Eigen::VectorXd naive_forward(const Network& net, const RowMatrix& patches);

// Mean cross-entropy of a batch computed with naive_forward.
double naive_loss(const Network& net, const Batch& batch);

// Central differences of naive_loss with respect to every weight.
RowMatrix fd_weight_gradient(const Network& net, const Batch& batch, double h = 1e-6);

// Smallest |<w, x_p> + b| over all neurons and patches of the batch.
double min_abs_preactivation(const Network& net, const Batch& batch);

}  // namespace granlab::oracle
