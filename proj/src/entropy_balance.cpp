#include "mtard/entropy_balance.hpp"

#include <algorithm>
#include <cmath>

#include "mtard/numeric.hpp"

namespace mtard {

void TemperatureState::validate() const {
  require(r_tau > 0.0, ErrorKind::invalid_input, "temperature state: r_tau must be > 0");
  require(tau_min > 0.0 && tau_min <= tau_max, ErrorKind::invalid_input,
          "temperature state: need 0 < tau_min <= tau_max");
  require(tau_nat >= tau_min && tau_nat <= tau_max, ErrorKind::invalid_input,
          "temperature state: tau_nat outside clamp bounds");
  require(tau_adv >= tau_min && tau_adv <= tau_max, ErrorKind::invalid_input,
          "temperature state: tau_adv outside clamp bounds");
  require(tau_s > 0.0, ErrorKind::invalid_input, "temperature state: tau_s must be > 0");
}

TemperatureState make_temperature_state(double tau_init, double r_tau, double tau_min,
                                        double tau_max, double tau_s) {
  TemperatureState state;
  state.tau_nat = tau_init;
  state.tau_adv = tau_init;
  state.r_tau = r_tau;
  state.tau_min = tau_min;
  state.tau_max = tau_max;
  state.tau_s = tau_s;
  state.validate();
  return state;
}

double batch_mean_entropy(const Tensor& teacher_logits, double tau) {
  require(teacher_logits.rank() == 2 && teacher_logits.rows() >= 1, ErrorKind::invalid_input,
          "batch_mean_entropy: need a non-empty [N x C] batch");
  double total = 0.0;
  std::size_t n = teacher_logits.rows();
  for (std::size_t r = 0; r < n; ++r) total += entropy(tempered_softmax(teacher_logits.row(r), tau));
  return total / static_cast<double>(n);
}

namespace {
double sign0(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }
}  // namespace

TemperatureState update_temperatures(const TemperatureState& state, double h_nat, double h_adv) {
  state.validate();
  require(std::isfinite(h_nat) && std::isfinite(h_adv), ErrorKind::invalid_input,
          "update_temperatures: entropies must be finite");
  TemperatureState next = state;
  next.tau_nat = std::clamp(state.tau_nat - state.r_tau * sign0(h_nat - h_adv), state.tau_min,
                            state.tau_max);
  next.tau_adv = std::clamp(state.tau_adv - state.r_tau * sign0(h_adv - h_nat), state.tau_min,
                            state.tau_max);
  return next;
}

}  // namespace mtard
