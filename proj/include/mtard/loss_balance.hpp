#pragma once

#include <utility>

namespace mtard {

/// Loss-weight controller state: first-batch loss denominators plus the
/// smoothed weights. Weights always sum to 1.
struct LossBalanceState {
  double l_nat_0 = 0.0;   // valid once initialized()
  double l_adv_0 = 0.0;
  double w_nat = 0.5;
  double w_adv = 0.5;
  double beta = 1.0;      // imbalance-correction strength
  double r_w = 0.025;     // weight learning rate
  bool init_done = false;

  bool initialized() const { return init_done; }
};

/// Denominator floor; losses at or below this indicate a degenerate setup.
inline constexpr double kLossFloor = 1e-8;

/// Stores the first-batch losses as denominators and starts weights at 0.5.
/// Calling twice in a run is an error.
LossBalanceState record_initial(LossBalanceState state, double l_nat, double l_adv);

/// (l_nat / l_nat_0, l_adv / l_adv_0).
std::pair<double, double> relative_losses(const LossBalanceState& state, double l_nat, double l_adv);

/// beta-powered normalized split; the larger relative loss (the objective the
/// student has learned least) receives the larger share. Components sum to 1
/// exactly (the second is computed as the complement). Both inputs zero maps
/// to (0.5, 0.5) by convention.
std::pair<double, double> relative_weights(double l_rel_nat, double l_rel_adv, double beta);

/// w <- r_w * r + (1 - r_w) * w, both components.
LossBalanceState update_weights(LossBalanceState state, double r_nat, double r_adv);

}  // namespace mtard
