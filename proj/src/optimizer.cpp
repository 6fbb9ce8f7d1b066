#include "mtard/optimizer.hpp"

namespace mtard {

void sgd_step(NetworkParams& params, std::vector<Tensor>& velocity,
              const std::vector<Tensor>& grads, double lr, double momentum, double weight_decay) {
  require(velocity.size() == params.tensors.size() && grads.size() == params.tensors.size(),
          ErrorKind::shape_mismatch, "sgd_step: params/velocity/grads layout mismatch");
  for (std::size_t t = 0; t < params.tensors.size(); ++t) {
    Tensor& p = params.tensors[t];
    Tensor& v = velocity[t];
    const Tensor& g = grads[t];
    check_same_shape(p, g, "sgd_step");
    check_same_shape(p, v, "sgd_step");
    for (std::size_t i = 0; i < p.data.size(); ++i) {
      v.data[i] = momentum * v.data[i] + (g.data[i] + weight_decay * p.data[i]);
      p.data[i] -= lr * v.data[i];
    }
  }
}

std::vector<Tensor> zero_velocity(const NetworkParams& params) {
  std::vector<Tensor> v;
  v.reserve(params.tensors.size());
  for (const Tensor& t : params.tensors) v.push_back(Tensor::zeros_like(t));
  return v;
}

double scheduled_lr(double lr0, const std::vector<int>& decay_epochs, double factor, int epoch) {
  double lr = lr0;
  for (int e : decay_epochs)
    if (epoch >= e) lr *= factor;
  return lr;
}

}  // namespace mtard
