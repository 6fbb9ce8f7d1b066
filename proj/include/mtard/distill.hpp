#pragma once

#include "mtard/tensor.hpp"

namespace mtard {

/// The two knowledge-distillation loss terms of one training step.
struct DistillLossParts {
  double l_nat = 0.0;
  double l_adv = 0.0;
};

/// Batch-mean KL from the teacher's tempered distribution (target) to the
/// student's tempered distribution. Both logit tensors are [N x C].
double kd_loss(const Tensor& student_logits, const Tensor& teacher_logits, double tau_s,
               double tau_t);

struct KdLossGrad {
  double loss = 0.0;
  Tensor grad;  // dLoss/d(student logits), [N x C]
};

/// kd_loss plus its exact gradient w.r.t. the student logits:
/// per row (softmax(z_s/tau_s) - softmax(z_t/tau_t)) / (tau_s * N).
KdLossGrad kd_loss_with_grad(const Tensor& student_logits, const Tensor& teacher_logits,
                             double tau_s, double tau_t, bool tau_squared_scale = false);

/// Weighted composite: w_nat * l_nat + w_adv * l_adv.
double mtard_total(const DistillLossParts& parts, double w_nat, double w_adv);

}  // namespace mtard
