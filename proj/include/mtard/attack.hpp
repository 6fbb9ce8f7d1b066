#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mtard/net.hpp"

namespace mtard {

enum class AttackKind : std::uint8_t { fgsm = 0, pgd = 1, cw = 2 };
enum class AttackLoss : std::uint8_t { cross_entropy = 0, cw_margin = 1 };

struct AttackConfig {
  AttackKind kind = AttackKind::pgd;
  double epsilon = 8.0 / 255.0;          // L-inf radius in input units
  double step_size = 2.0 / 255.0;        // per-step magnitude
  int steps = 10;                        // iteration count (ignored by fgsm)
  double random_start_scale = 0.001;     // initial uniform perturbation scale
  AttackLoss loss = AttackLoss::cross_entropy;

  void validate() const;
};

std::string attack_kind_name(AttackKind kind);
AttackKind attack_kind_from(const std::string& name);

/// Single-step sign attack: clip_[0,1](x + eps * sign(grad_x CE)).
Tensor fgsm(const NetworkSpec& spec, const NetworkParams& params, const Tensor& x,
            const std::vector<std::uint32_t>& y, double epsilon);

/// Iterated sign attack on cross-entropy under an L-inf ball, random start
/// projected into the ball, final clip to [0,1]. Requires cfg.loss == cross_entropy.
Tensor pgd(const NetworkSpec& spec, const NetworkParams& params, const Tensor& x,
           const std::vector<std::uint32_t>& y, const AttackConfig& cfg, std::uint64_t seed);

/// Same iteration maximizing the margin max_{k != y} z_k - z_y.
/// Requires cfg.loss == cw_margin.
Tensor cw_margin_pgd(const NetworkSpec& spec, const NetworkParams& params, const Tensor& x,
                     const std::vector<std::uint32_t>& y, const AttackConfig& cfg,
                     std::uint64_t seed);

/// Dispatch on cfg.kind.
Tensor run_attack(const NetworkSpec& spec, const NetworkParams& params, const Tensor& x,
                  const std::vector<std::uint32_t>& y, const AttackConfig& cfg, std::uint64_t seed);

/// Batch-mean losses (used by attack tests and diagnostics).
double mean_cross_entropy(const NetworkSpec& spec, const NetworkParams& params, const Tensor& x,
                          const std::vector<std::uint32_t>& y);
double mean_cw_margin(const NetworkSpec& spec, const NetworkParams& params, const Tensor& x,
                      const std::vector<std::uint32_t>& y);

/// Gradient of the batch-mean attack objective w.r.t. the inputs.
Tensor attack_loss_input_grad(const NetworkSpec& spec, const NetworkParams& params, const Tensor& x,
                              const std::vector<std::uint32_t>& y, AttackLoss loss);

}  // namespace mtard
