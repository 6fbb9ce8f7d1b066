#include "mtard/attack.hpp"

#include <algorithm>
#include <cmath>

#include "mtard/numeric.hpp"
#include "mtard/rng.hpp"

namespace mtard {

void AttackConfig::validate() const {
  require(epsilon >= 0.0, ErrorKind::invalid_input, "attack: epsilon must be >= 0");
  require(step_size >= 0.0, ErrorKind::invalid_input, "attack: step_size must be >= 0");
  require(steps >= 0, ErrorKind::invalid_input, "attack: steps must be >= 0");
  require(random_start_scale >= 0.0, ErrorKind::invalid_input,
          "attack: random_start_scale must be >= 0");
}

std::string attack_kind_name(AttackKind kind) {
  switch (kind) {
    case AttackKind::fgsm: return "fgsm";
    case AttackKind::pgd: return "pgd";
    case AttackKind::cw: return "cw";
  }
  return "unknown";
}

AttackKind attack_kind_from(const std::string& name) {
  if (name == "fgsm") return AttackKind::fgsm;
  if (name == "pgd") return AttackKind::pgd;
  if (name == "cw") return AttackKind::cw;
  fail(ErrorKind::config, "unknown attack kind: " + name);
}

namespace {

double sign0(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

void check_attack_inputs(const Tensor& x, const std::vector<std::uint32_t>& y, std::size_t classes) {
  require(x.rank() == 2 && x.rows() == y.size(), ErrorKind::shape_mismatch,
          "attack: batch/labels size mismatch");
  for (std::uint32_t yi : y)
    require(yi < classes, ErrorKind::invalid_input, "attack: label out of range");
  for (double v : x.data)
    require(v >= 0.0 && v <= 1.0, ErrorKind::invalid_input, "attack: inputs must lie in [0,1]");
}

/// dLoss/dlogits per row for the attack objective (scale-free: only the sign
/// of the input gradient matters).
Tensor loss_upstream(const Tensor& logits, const std::vector<std::uint32_t>& y, AttackLoss loss) {
  std::size_t n = logits.rows(), c = logits.cols();
  Tensor up = Tensor::zeros({n, c});
  for (std::size_t r = 0; r < n; ++r) {
    if (loss == AttackLoss::cross_entropy) {
      std::vector<double> g = cross_entropy_grad(logits.row(r), y[r]);
      std::copy(g.begin(), g.end(), up.row(r).begin());
    } else {
      // margin: max_{k != y} z_k - z_y
      std::size_t best = y[r] == 0 ? 1 : 0;
      for (std::size_t k = 0; k < c; ++k)
        if (k != y[r] && logits.at(r, k) > logits.at(r, best)) best = k;
      up.at(r, best) += 1.0;
      up.at(r, y[r]) -= 1.0;
    }
  }
  return up;
}

Tensor input_grad(const NetworkSpec& spec, const NetworkParams& params, const Tensor& x,
                  const std::vector<std::uint32_t>& y, AttackLoss loss) {
  ForwardTrace trace = forward_trace(spec, params, x);
  Tensor up = loss_upstream(trace.logits, y, loss);
  return backward(spec, params, trace, up).input;
}

Tensor iterated_sign_attack(const NetworkSpec& spec, const NetworkParams& params, const Tensor& x,
                            const std::vector<std::uint32_t>& y, const AttackConfig& cfg,
                            std::uint64_t seed, AttackLoss loss) {
  cfg.validate();
  check_attack_inputs(x, y, spec.classes);

  Tensor delta = Tensor::zeros_like(x);
  if (cfg.random_start_scale > 0.0) {
    Rng rng(Rng::derive_key(seed, rng_tag::attack));
    for (double& d : delta.data)
      d = rng.uniform(-cfg.random_start_scale, cfg.random_start_scale);
    // The start must already respect the budget.
    for (double& d : delta.data) d = std::clamp(d, -cfg.epsilon, cfg.epsilon);
  }

  for (int step = 0; step < cfg.steps; ++step) {
    Tensor xt = x;
    for (std::size_t i = 0; i < xt.data.size(); ++i) xt.data[i] += delta.data[i];
    Tensor g = input_grad(spec, params, xt, y, loss);
    for (std::size_t i = 0; i < delta.data.size(); ++i) {
      delta.data[i] =
          std::clamp(delta.data[i] + cfg.step_size * sign0(g.data[i]), -cfg.epsilon, cfg.epsilon);
    }
  }

  Tensor adv = x;
  for (std::size_t i = 0; i < adv.data.size(); ++i)
    adv.data[i] = std::clamp(adv.data[i] + delta.data[i], 0.0, 1.0);
  return adv;
}

}  // namespace

Tensor fgsm(const NetworkSpec& spec, const NetworkParams& params, const Tensor& x,
            const std::vector<std::uint32_t>& y, double epsilon) {
  require(epsilon >= 0.0, ErrorKind::invalid_input, "fgsm: epsilon must be >= 0");
  check_attack_inputs(x, y, spec.classes);
  Tensor g = input_grad(spec, params, x, y, AttackLoss::cross_entropy);
  Tensor adv = x;
  for (std::size_t i = 0; i < adv.data.size(); ++i)
    adv.data[i] = std::clamp(adv.data[i] + epsilon * sign0(g.data[i]), 0.0, 1.0);
  return adv;
}

Tensor pgd(const NetworkSpec& spec, const NetworkParams& params, const Tensor& x,
           const std::vector<std::uint32_t>& y, const AttackConfig& cfg, std::uint64_t seed) {
  require(cfg.loss == AttackLoss::cross_entropy, ErrorKind::invalid_input,
          "pgd: loss must be cross-entropy");
  return iterated_sign_attack(spec, params, x, y, cfg, seed, AttackLoss::cross_entropy);
}

Tensor cw_margin_pgd(const NetworkSpec& spec, const NetworkParams& params, const Tensor& x,
                     const std::vector<std::uint32_t>& y, const AttackConfig& cfg,
                     std::uint64_t seed) {
  require(cfg.loss == AttackLoss::cw_margin, ErrorKind::invalid_input,
          "cw_margin_pgd: loss must be cw-margin");
  return iterated_sign_attack(spec, params, x, y, cfg, seed, AttackLoss::cw_margin);
}

Tensor run_attack(const NetworkSpec& spec, const NetworkParams& params, const Tensor& x,
                  const std::vector<std::uint32_t>& y, const AttackConfig& cfg, std::uint64_t seed) {
  switch (cfg.kind) {
    case AttackKind::fgsm: return fgsm(spec, params, x, y, cfg.epsilon);
    case AttackKind::pgd: return pgd(spec, params, x, y, cfg, seed);
    case AttackKind::cw: return cw_margin_pgd(spec, params, x, y, cfg, seed);
  }
  fail(ErrorKind::invalid_input, "run_attack: bad attack kind");
}

double mean_cross_entropy(const NetworkSpec& spec, const NetworkParams& params, const Tensor& x,
                          const std::vector<std::uint32_t>& y) {
  Tensor logits = forward(spec, params, x);
  double total = 0.0;
  for (std::size_t r = 0; r < logits.rows(); ++r) total += cross_entropy(logits.row(r), y[r]);
  return total / static_cast<double>(logits.rows());
}

Tensor attack_loss_input_grad(const NetworkSpec& spec, const NetworkParams& params, const Tensor& x,
                              const std::vector<std::uint32_t>& y, AttackLoss loss) {
  check_attack_inputs(x, y, spec.classes);
  Tensor g = input_grad(spec, params, x, y, loss);
  double inv_n = 1.0 / static_cast<double>(x.rows());
  for (double& v : g.data) v *= inv_n;
  return g;
}

double mean_cw_margin(const NetworkSpec& spec, const NetworkParams& params, const Tensor& x,
                      const std::vector<std::uint32_t>& y) {
  Tensor logits = forward(spec, params, x);
  double total = 0.0;
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    std::size_t c = logits.cols();
    std::size_t best = y[r] == 0 ? 1 : 0;
    for (std::size_t k = 0; k < c; ++k)
      if (k != y[r] && logits.at(r, k) > logits.at(r, best)) best = k;
    total += logits.at(r, best) - logits.at(r, y[r]);
  }
  return total / static_cast<double>(logits.rows());
}

}  // namespace mtard
