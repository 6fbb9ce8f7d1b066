#pragma once

#include "mtard/tensor.hpp"

namespace mtard {

/// Teacher temperatures with their sign-rule update settings. The student
/// temperature rides along as configuration and never changes during a run.
struct TemperatureState {
  double tau_nat = 1.0;
  double tau_adv = 1.0;
  double r_tau = 0.001;   // temperature learning rate
  double tau_min = 1.0;
  double tau_max = 10.0;
  double tau_s = 1.0;     // student temperature (constant)

  void validate() const;
};

TemperatureState make_temperature_state(double tau_init, double r_tau, double tau_min,
                                        double tau_max, double tau_s);

/// Mean over rows of entropy(tempered_softmax(row, tau)); logits are [N x C].
double batch_mean_entropy(const Tensor& teacher_logits, double tau);

/// One sign-rule step: the higher-entropy teacher cools down, the lower-entropy
/// teacher heats up, both by exactly r_tau, then clamp to [tau_min, tau_max].
/// sign(0) = 0, so exact balance is a fixed point.
TemperatureState update_temperatures(const TemperatureState& state, double h_nat, double h_adv);

}  // namespace mtard
