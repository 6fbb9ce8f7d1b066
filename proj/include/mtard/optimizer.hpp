#pragma once

#include <vector>

#include "mtard/net.hpp"

namespace mtard {

/// Classical SGD with momentum and coupled L2 weight decay:
///   v <- momentum * v + (grad + weight_decay * param)
///   param <- param - lr * v
/// velocity must have the same layout as params.tensors.
void sgd_step(NetworkParams& params, std::vector<Tensor>& velocity,
              const std::vector<Tensor>& grads, double lr, double momentum, double weight_decay);

std::vector<Tensor> zero_velocity(const NetworkParams& params);

/// Step schedule: lr0 * factor^(number of decay epochs <= epoch).
double scheduled_lr(double lr0, const std::vector<int>& decay_epochs, double factor, int epoch);

}  // namespace mtard
