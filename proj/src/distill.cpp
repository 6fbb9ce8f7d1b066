#include "mtard/distill.hpp"

#include <cmath>

#include "mtard/numeric.hpp"

namespace mtard {

namespace {

void check_pair(const Tensor& student_logits, const Tensor& teacher_logits, double tau_s,
                double tau_t) {
  require(student_logits.rank() == 2 && teacher_logits.rank() == 2, ErrorKind::shape_mismatch,
          "kd_loss: logits must be [N x C]");
  check_same_shape(student_logits, teacher_logits, "kd_loss");
  require(tau_s > 0.0 && tau_t > 0.0, ErrorKind::domain, "kd_loss: temperatures must be > 0");
}

}  // namespace

double kd_loss(const Tensor& student_logits, const Tensor& teacher_logits, double tau_s,
               double tau_t) {
  check_pair(student_logits, teacher_logits, tau_s, tau_t);
  std::size_t n = student_logits.rows();
  double total = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    ProbVector target = tempered_softmax(teacher_logits.row(r), tau_t);
    ProbVector approx = tempered_softmax(student_logits.row(r), tau_s);
    total += kl_divergence(target, approx);
  }
  return total / static_cast<double>(n);
}

KdLossGrad kd_loss_with_grad(const Tensor& student_logits, const Tensor& teacher_logits,
                             double tau_s, double tau_t, bool tau_squared_scale) {
  check_pair(student_logits, teacher_logits, tau_s, tau_t);
  std::size_t n = student_logits.rows(), c = student_logits.cols();
  double scale = tau_squared_scale ? tau_t * tau_t : 1.0;

  KdLossGrad out;
  out.grad = Tensor::zeros({n, c});
  for (std::size_t r = 0; r < n; ++r) {
    ProbVector target = tempered_softmax(teacher_logits.row(r), tau_t);
    ProbVector approx = tempered_softmax(student_logits.row(r), tau_s);
    out.loss += kl_divergence(target, approx);
    double coef = scale / (tau_s * static_cast<double>(n));
    for (std::size_t k = 0; k < c; ++k) out.grad.at(r, k) = coef * (approx[k] - target[k]);
  }
  out.loss = scale * out.loss / static_cast<double>(n);
  return out;
}

double mtard_total(const DistillLossParts& parts, double w_nat, double w_adv) {
  require(std::isfinite(w_nat) && std::isfinite(w_adv), ErrorKind::invalid_input,
          "mtard_total: weights must be finite");
  require(std::isfinite(parts.l_nat) && std::isfinite(parts.l_adv) && parts.l_nat >= 0.0 &&
              parts.l_adv >= 0.0,
          ErrorKind::invalid_input, "mtard_total: loss parts must be finite and >= 0");
  return w_nat * parts.l_nat + w_adv * parts.l_adv;
}

}  // namespace mtard
