#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mtard/attack.hpp"
#include "mtard/checkpoint.hpp"
#include "mtard/dataset.hpp"
#include "mtard/distill.hpp"
#include "mtard/entropy_balance.hpp"
#include "mtard/loss_balance.hpp"
#include "mtard/metrics.hpp"
#include "mtard/net.hpp"
#include "mtard/optimizer.hpp"

namespace mtard {

enum class TrainMode {
  natural,         // plain cross-entropy
  sat,             // adversarial training: CE on PGD batches
  mtard,           // two-teacher distillation, both controllers on
  mtard_no_ebb,    // loss-weight controller only (temperatures fixed)
  mtard_no_nlb,    // temperature controller only (weights fixed)
  baseline_fixed,  // both controllers off (fixed alpha split)
};

std::string train_mode_name(TrainMode mode);
TrainMode train_mode_from(const std::string& name);

struct OptimizerConfig {
  double lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 2e-4;
  std::vector<int> decay_epochs = {40, 50};
  double decay_factor = 0.1;
};

struct BalanceConfig {
  double r_tau = 0.001;
  double tau_min = 1.0;
  double tau_max = 10.0;
  double tau_init = 1.0;
  double tau_s = 1.0;
  double beta = 1.0;
  double r_w = 0.025;
  double alpha = 0.5;              // fixed-weight split: (1-alpha, alpha)
  bool tau_squared_scale = false;  // optional classic-KD style loss scaling
};

struct EvalSettings {
  AttackConfig attack;  // checkpoint-selection attack
  std::string attack_name = "pgd_sat";
  double pi_nat = 0.5;
  double pi_adv = 0.5;

  EvalSettings() {
    attack.kind = AttackKind::pgd;
    attack.steps = 20;
  }
};

struct TrainConfig {
  TrainMode mode = TrainMode::mtard;
  int epochs = 60;
  int batch_size = 128;
  std::uint64_t seed = 1;
  OptimizerConfig opt;
  AttackConfig attack;  // inner maximization (sat and distillation)
  BalanceConfig balance;
  EvalSettings eval;
  Precision precision = Precision::f64;
  int stop_after_epoch = -1;  // >= 0: halt after that epoch (resume testing)

  void validate() const;
};

enum class TrainEventKind {
  attack_generated,
  losses_computed,
  initial_recorded,
  weights_updated,
  params_stepped,
  temperatures_updated,
  epoch_evaluated,
};

struct TrainEvent {
  TrainEventKind kind;
  int epoch;
  long step;  // global batch counter
};

/// Everything needed to continue a run exactly where it stopped.
struct TrainerState {
  int next_epoch = 0;
  long step = 0;
  NetworkParams params;
  std::vector<Tensor> velocity;
  TemperatureState temps;
  LossBalanceState balance;
  std::vector<MetricRecord> history;
  int best_epoch = -1;
  double best_w_robust = -1.0;
  NetworkParams best_params;
};

void save_trainer_state(const TrainerState& state, const std::string& path);
TrainerState load_trainer_state(const std::string& path, const NetworkSpec& spec);

struct TrainHooks {
  std::function<void(const TrainEvent&)> on_event;
  std::function<void(const TrainerState&, const MetricRecord&)> on_epoch;
};

struct TrainResult {
  NetworkParams params;       // final-epoch parameters
  NetworkParams best_params;  // best checkpoint by w_robust
  int best_epoch = -1;
  std::vector<MetricRecord> history;
  bool stopped_early = false;
};

/// Clean-teacher pretraining: SGD on mean cross-entropy.
TrainResult train_natural(const NetworkSpec& spec, const Dataset& train, const Dataset& test,
                          const TrainConfig& cfg, const TrainHooks& hooks = {},
                          const TrainerState* resume = nullptr);

/// Robust-teacher pretraining: each batch replaced by its PGD counterpart.
TrainResult train_sat(const NetworkSpec& spec, const Dataset& train, const Dataset& test,
                      const TrainConfig& cfg, const TrainHooks& hooks = {},
                      const TrainerState* resume = nullptr);

/// Two-teacher distillation. Per batch: student-generated PGD examples, the two
/// KD losses, first-batch loss recording, weight update, SGD step on the
/// weighted sum, then the temperature update. Teachers are never modified.
TrainResult distill_mtard(const NetworkSpec& student_spec, const NetworkSpec& clean_spec,
                          const NetworkParams& clean_teacher, const NetworkSpec& robust_spec,
                          const NetworkParams& robust_teacher, const Dataset& train,
                          const Dataset& test, const TrainConfig& cfg, const TrainHooks& hooks = {},
                          const TrainerState* resume = nullptr);

/// The weighted two-term distillation objective with exact gradients, exposed
/// for gradient verification. Input gradients flow through both the student
/// and the (frozen-parameter) teacher branches.
struct CompositeResult {
  DistillLossParts parts;
  double total = 0.0;
  std::vector<Tensor> student_grads;
  Tensor x_nat_grad;
  Tensor x_adv_grad;
};

CompositeResult mtard_composite(const NetworkSpec& student_spec, const NetworkParams& student,
                                const NetworkSpec& clean_spec, const NetworkParams& clean_teacher,
                                const NetworkSpec& robust_spec, const NetworkParams& robust_teacher,
                                const Tensor& x_nat, const Tensor& x_adv, double tau_s,
                                double tau_nat, double tau_adv, double w_nat, double w_adv,
                                bool want_input_grads = false);

}  // namespace mtard
