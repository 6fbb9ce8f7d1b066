#include "mtard/loss_balance.hpp"

#include <cmath>

#include "mtard/error.hpp"

namespace mtard {

LossBalanceState record_initial(LossBalanceState state, double l_nat, double l_adv) {
  require(!state.initialized(), ErrorKind::state,
          "record_initial: initial losses already recorded for this run");
  require(std::isfinite(l_nat) && std::isfinite(l_adv), ErrorKind::invalid_input,
          "record_initial: losses must be finite");
  require(l_nat > kLossFloor && l_adv > kLossFloor, ErrorKind::config,
          "record_initial: initial loss below floor (degenerate teacher/student pairing)");
  state.l_nat_0 = l_nat;
  state.l_adv_0 = l_adv;
  state.w_nat = 0.5;
  state.w_adv = 0.5;
  state.init_done = true;
  return state;
}

std::pair<double, double> relative_losses(const LossBalanceState& state, double l_nat,
                                          double l_adv) {
  require(state.initialized(), ErrorKind::state, "relative_losses: state not initialized");
  return {l_nat / state.l_nat_0, l_adv / state.l_adv_0};
}

std::pair<double, double> relative_weights(double l_rel_nat, double l_rel_adv, double beta) {
  require(l_rel_nat >= 0.0 && l_rel_adv >= 0.0, ErrorKind::invalid_input,
          "relative_weights: relative losses must be >= 0");
  require(beta > 0.0 || beta == 0.0, ErrorKind::invalid_input,
          "relative_weights: beta must be >= 0");
  if (l_rel_nat == 0.0 && l_rel_adv == 0.0) return {0.5, 0.5};

  double a = std::pow(l_rel_nat, beta);
  double b = std::pow(l_rel_adv, beta);
  double denom = a + b;
  require(std::isfinite(denom) && denom > 0.0, ErrorKind::numeric,
          "relative_weights: degenerate powered sum");
  double r_nat = a / denom;
  return {r_nat, 1.0 - r_nat};
}

LossBalanceState update_weights(LossBalanceState state, double r_nat, double r_adv) {
  require(std::isfinite(r_nat) && std::isfinite(r_adv), ErrorKind::invalid_input,
          "update_weights: weights must be finite");
  require(std::abs(r_nat + r_adv - 1.0) <= 1e-9, ErrorKind::invalid_input,
          "update_weights: relative weights must sum to 1");
  require(state.r_w >= 0.0 && state.r_w <= 1.0, ErrorKind::invalid_input,
          "update_weights: r_w must lie in [0,1]");
  state.w_nat = state.r_w * r_nat + (1.0 - state.r_w) * state.w_nat;
  state.w_adv = state.r_w * r_adv + (1.0 - state.r_w) * state.w_adv;
  return state;
}

}  // namespace mtard
