#include "mtard/trainer.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

#include "mtard/binio.hpp"
#include "mtard/numeric.hpp"
#include "mtard/rng.hpp"

namespace mtard {

std::string train_mode_name(TrainMode mode) {
  switch (mode) {
    case TrainMode::natural: return "natural";
    case TrainMode::sat: return "sat";
    case TrainMode::mtard: return "mtard";
    case TrainMode::mtard_no_ebb: return "mtard-no-ebb";
    case TrainMode::mtard_no_nlb: return "mtard-no-nlb";
    case TrainMode::baseline_fixed: return "baseline-fixed";
  }
  return "unknown";
}

TrainMode train_mode_from(const std::string& name) {
  if (name == "natural") return TrainMode::natural;
  if (name == "sat") return TrainMode::sat;
  if (name == "mtard") return TrainMode::mtard;
  if (name == "mtard-no-ebb") return TrainMode::mtard_no_ebb;
  if (name == "mtard-no-nlb") return TrainMode::mtard_no_nlb;
  if (name == "baseline-fixed") return TrainMode::baseline_fixed;
  fail(ErrorKind::config, "unknown train mode: " + name);
}

void TrainConfig::validate() const {
  require(epochs >= 0, ErrorKind::config, "train config: epochs must be >= 0");
  require(batch_size >= 1, ErrorKind::config, "train config: batch_size must be >= 1");
  require(opt.lr > 0.0, ErrorKind::config, "train config: lr must be > 0");
  require(opt.momentum >= 0.0 && opt.momentum < 1.0, ErrorKind::config,
          "train config: momentum must lie in [0,1)");
  require(opt.weight_decay >= 0.0, ErrorKind::config, "train config: weight_decay must be >= 0");
  require(opt.decay_factor > 0.0, ErrorKind::config, "train config: decay_factor must be > 0");
  int prev = -1;
  for (int e : opt.decay_epochs) {
    require(e > prev, ErrorKind::config, "train config: decay epochs must be strictly increasing");
    require(e < epochs || epochs == 0, ErrorKind::config,
            "train config: decay epochs must be < epochs");
    prev = e;
  }
  attack.validate();
  eval.attack.validate();
  require(eval.pi_nat >= 0.0 && eval.pi_adv >= 0.0 &&
              std::abs(eval.pi_nat + eval.pi_adv - 1.0) <= 1e-12,
          ErrorKind::config, "train config: eval pi weights must be >= 0 and sum to 1");
  require(balance.r_tau > 0.0, ErrorKind::config, "train config: r_tau must be > 0");
  require(balance.r_w > 0.0 && balance.r_w <= 1.0, ErrorKind::config,
          "train config: r_w must lie in (0,1]");
  require(balance.beta >= 0.0, ErrorKind::config, "train config: beta must be >= 0");
  require(balance.alpha > 0.0 && balance.alpha < 1.0, ErrorKind::config,
          "train config: alpha must lie in (0,1)");
  require(balance.tau_min <= balance.tau_init && balance.tau_init <= balance.tau_max,
          ErrorKind::config, "train config: tau_init must lie within [tau_min, tau_max]");
  require(balance.tau_s > 0.0, ErrorKind::config, "train config: tau_s must be > 0");
}

namespace {

void round_to_f32(NetworkParams& params) {
  for (Tensor& t : params.tensors)
    for (double& v : t.data) v = static_cast<double>(static_cast<float>(v));
}

void apply_precision(NetworkParams& params, Precision precision) {
  if (precision == Precision::f32) round_to_f32(params);
}

struct Batch {
  Tensor x;
  std::vector<std::uint32_t> y;
};

Batch gather(const Dataset& ds, std::span<const std::size_t> idx) {
  Batch b;
  b.x = Tensor::zeros({idx.size(), ds.feature_dim()});
  b.y.resize(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    std::copy(ds.features.row(idx[i]).begin(), ds.features.row(idx[i]).end(), b.x.row(i).begin());
    b.y[i] = ds.labels[idx[i]];
  }
  return b;
}

void emit(const TrainHooks& hooks, TrainEventKind kind, int epoch, long step) {
  if (hooks.on_event) hooks.on_event({kind, epoch, step});
}

void check_finite_logits(const Tensor& logits, int epoch, long step) {
  require(logits.all_finite(), ErrorKind::numeric,
          "training diverged: non-finite logits at epoch " + std::to_string(epoch) + " step " +
              std::to_string(step));
}

void check_finite_loss(double loss, int epoch, long step) {
  require(std::isfinite(loss), ErrorKind::numeric,
          "training diverged: non-finite loss at epoch " + std::to_string(epoch) + " step " +
              std::to_string(step));
}

MetricRecord evaluate_epoch(const NetworkSpec& spec, const NetworkParams& params,
                            const Dataset& test, const TrainConfig& cfg, int epoch) {
  MetricRecord rec;
  rec.epoch = epoch;
  rec.clean_acc = accuracy(spec, params, test);
  double robust = robust_accuracy(spec, params, test, cfg.eval.attack,
                                  Rng::derive_key(cfg.seed, rng_tag::eval, 0x15ULL, epoch));
  rec.robust_acc[cfg.eval.attack_name] = robust;
  rec.selection_attack = cfg.eval.attack_name;
  rec.pi_nat = cfg.eval.pi_nat;
  rec.pi_adv = cfg.eval.pi_adv;
  rec.w_robust = w_robust(rec.clean_acc, robust, cfg.eval.pi_nat, cfg.eval.pi_adv);
  return rec;
}

void track_best(TrainerState& state, const MetricRecord& rec) {
  if (rec.w_robust > state.best_w_robust) {
    state.best_w_robust = rec.w_robust;
    state.best_epoch = rec.epoch;
    state.best_params = state.params;
  }
}

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, int batch_size,
                                                    std::uint64_t seed, int epoch) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(Rng::derive_key(seed, rng_tag::shuffle, static_cast<std::uint64_t>(epoch)));
  rng.shuffle(perm);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(batch_size)) {
    std::size_t len = std::min<std::size_t>(batch_size, n - start);
    batches.emplace_back(perm.begin() + start, perm.begin() + start + len);
  }
  return batches;  // last partial batch kept
}

TrainerState fresh_state(const NetworkSpec& spec, const TrainConfig& cfg) {
  TrainerState state;
  state.params = init_params(spec, cfg.seed, Role::student);
  apply_precision(state.params, cfg.precision);
  state.velocity = zero_velocity(state.params);
  state.temps = make_temperature_state(cfg.balance.tau_init, cfg.balance.r_tau, cfg.balance.tau_min,
                                       cfg.balance.tau_max, cfg.balance.tau_s);
  state.balance.beta = cfg.balance.beta;
  state.balance.r_w = cfg.balance.r_w;
  return state;
}

TrainerState start_state(const NetworkSpec& spec, const TrainConfig& cfg,
                         const TrainerState* resume) {
  if (!resume) return fresh_state(spec, cfg);
  require(resume->params.fingerprint == spec.fingerprint(), ErrorKind::fingerprint_mismatch,
          "resume state was written for a different network spec");
  require(resume->next_epoch <= cfg.epochs, ErrorKind::config,
          "resume state is beyond the configured epoch budget");
  return *resume;
}

TrainResult finish(TrainerState&& state, bool stopped_early) {
  TrainResult result;
  result.params = std::move(state.params);
  if (state.best_epoch >= 0) {
    result.best_params = std::move(state.best_params);
    result.best_epoch = state.best_epoch;
  } else {
    result.best_params = result.params;
  }
  result.history = std::move(state.history);
  result.stopped_early = stopped_early;
  return result;
}

/// Shared natural/SAT pretraining loop.
TrainResult pretrain_loop(const NetworkSpec& spec, const Dataset& train, const Dataset& test,
                          const TrainConfig& cfg, const TrainHooks& hooks,
                          const TrainerState* resume, bool adversarial) {
  cfg.validate();
  spec.validate();
  train.validate();
  test.validate();
  require(train.classes == spec.classes, ErrorKind::shape_mismatch,
          "pretrain: dataset/model class count mismatch");

  TrainerState state = start_state(spec, cfg, resume);
  for (int epoch = state.next_epoch; epoch < cfg.epochs; ++epoch) {
    double lr = scheduled_lr(cfg.opt.lr, cfg.opt.decay_epochs, cfg.opt.decay_factor, epoch);
    double loss_sum = 0.0;
    std::size_t batch_count = 0;

    for (const auto& idx : epoch_batches(train.size(), cfg.batch_size, cfg.seed, epoch)) {
      Batch b = gather(train, idx);
      if (adversarial) {
        b.x = pgd(spec, state.params, b.x, b.y, cfg.attack,
                  Rng::derive_key(cfg.seed, rng_tag::attack, static_cast<std::uint64_t>(epoch),
                                  static_cast<std::uint64_t>(batch_count)));
        emit(hooks, TrainEventKind::attack_generated, epoch, state.step);
      }

      ForwardTrace trace = forward_trace(spec, state.params, b.x);
      check_finite_logits(trace.logits, epoch, state.step);
      std::size_t n = b.x.rows();
      double loss = 0.0;
      Tensor upstream = Tensor::zeros({n, spec.classes});
      for (std::size_t r = 0; r < n; ++r) {
        loss += cross_entropy(trace.logits.row(r), b.y[r]);
        std::vector<double> g = cross_entropy_grad(trace.logits.row(r), b.y[r]);
        for (std::size_t k = 0; k < spec.classes; ++k)
          upstream.at(r, k) = g[k] / static_cast<double>(n);
      }
      loss /= static_cast<double>(n);
      check_finite_loss(loss, epoch, state.step);
      emit(hooks, TrainEventKind::losses_computed, epoch, state.step);

      Gradients grads = backward(spec, state.params, trace, upstream);
      sgd_step(state.params, state.velocity, grads.params, lr, cfg.opt.momentum,
               cfg.opt.weight_decay);
      apply_precision(state.params, cfg.precision);
      emit(hooks, TrainEventKind::params_stepped, epoch, state.step);

      loss_sum += loss;
      ++batch_count;
      ++state.step;
    }

    MetricRecord rec = evaluate_epoch(spec, state.params, test, cfg, epoch);
    rec.snapshot.l_total = loss_sum / static_cast<double>(batch_count);
    rec.snapshot.lr = lr;
    emit(hooks, TrainEventKind::epoch_evaluated, epoch, state.step);
    state.history.push_back(rec);
    track_best(state, rec);
    state.next_epoch = epoch + 1;
    if (hooks.on_epoch) hooks.on_epoch(state, rec);
    if (cfg.stop_after_epoch >= 0 && epoch >= cfg.stop_after_epoch)
      return finish(std::move(state), epoch + 1 < cfg.epochs);
  }
  return finish(std::move(state), false);
}

}  // namespace

TrainResult train_natural(const NetworkSpec& spec, const Dataset& train, const Dataset& test,
                          const TrainConfig& cfg, const TrainHooks& hooks,
                          const TrainerState* resume) {
  require(cfg.mode == TrainMode::natural, ErrorKind::config, "train_natural: mode must be natural");
  return pretrain_loop(spec, train, test, cfg, hooks, resume, false);
}

TrainResult train_sat(const NetworkSpec& spec, const Dataset& train, const Dataset& test,
                      const TrainConfig& cfg, const TrainHooks& hooks, const TrainerState* resume) {
  require(cfg.mode == TrainMode::sat, ErrorKind::config, "train_sat: mode must be sat");
  require(cfg.attack.loss == AttackLoss::cross_entropy, ErrorKind::config,
          "train_sat: inner maximization uses cross-entropy");
  return pretrain_loop(spec, train, test, cfg, hooks, resume, true);
}

namespace {

bool distill_mode(TrainMode mode) {
  return mode == TrainMode::mtard || mode == TrainMode::mtard_no_ebb ||
         mode == TrainMode::mtard_no_nlb || mode == TrainMode::baseline_fixed;
}

bool nlb_enabled(TrainMode mode) {
  return mode == TrainMode::mtard || mode == TrainMode::mtard_no_ebb;
}

bool ebb_enabled(TrainMode mode) {
  return mode == TrainMode::mtard || mode == TrainMode::mtard_no_nlb;
}

/// dLoss/d(teacher logits) for the KD term, through the tempered softmax of
/// the (frozen-parameter) teacher. Used only for input-gradient verification.
Tensor teacher_kd_upstream(const Tensor& student_logits, const Tensor& teacher_logits, double tau_s,
                           double tau_t) {
  std::size_t n = student_logits.rows(), c = student_logits.cols();
  Tensor up = Tensor::zeros({n, c});
  for (std::size_t r = 0; r < n; ++r) {
    ProbVector t = tempered_softmax(teacher_logits.row(r), tau_t);
    ProbVector s = tempered_softmax(student_logits.row(r), tau_s);
    double kl_row = 0.0;
    std::vector<double> diff(c);
    for (std::size_t k = 0; k < c; ++k) {
      diff[k] = std::log(t[k]) - std::log(std::max(s[k], kProbFloor));
      kl_row += t[k] * diff[k];
    }
    double coef = 1.0 / (tau_t * static_cast<double>(n));
    for (std::size_t k = 0; k < c; ++k) up.at(r, k) = coef * t[k] * (diff[k] - kl_row);
  }
  return up;
}

void scale_tensor(Tensor& t, double s) {
  for (double& v : t.data) v *= s;
}

void add_into(std::vector<Tensor>& acc, const std::vector<Tensor>& inc) {
  for (std::size_t i = 0; i < acc.size(); ++i)
    for (std::size_t j = 0; j < acc[i].data.size(); ++j) acc[i].data[j] += inc[i].data[j];
}

}  // namespace

CompositeResult mtard_composite(const NetworkSpec& student_spec, const NetworkParams& student,
                                const NetworkSpec& clean_spec, const NetworkParams& clean_teacher,
                                const NetworkSpec& robust_spec, const NetworkParams& robust_teacher,
                                const Tensor& x_nat, const Tensor& x_adv, double tau_s,
                                double tau_nat, double tau_adv, double w_nat, double w_adv,
                                bool want_input_grads) {
  ForwardTrace s_nat = forward_trace(student_spec, student, x_nat);
  ForwardTrace s_adv = forward_trace(student_spec, student, x_adv);
  Tensor t_nat_logits, t_adv_logits;
  ForwardTrace t_nat_trace, t_adv_trace;
  if (want_input_grads) {
    t_nat_trace = forward_trace(clean_spec, clean_teacher, x_nat);
    t_adv_trace = forward_trace(robust_spec, robust_teacher, x_adv);
    t_nat_logits = t_nat_trace.logits;
    t_adv_logits = t_adv_trace.logits;
  } else {
    t_nat_logits = forward(clean_spec, clean_teacher, x_nat);
    t_adv_logits = forward(robust_spec, robust_teacher, x_adv);
  }

  KdLossGrad kd_nat = kd_loss_with_grad(s_nat.logits, t_nat_logits, tau_s, tau_nat);
  KdLossGrad kd_adv = kd_loss_with_grad(s_adv.logits, t_adv_logits, tau_s, tau_adv);

  CompositeResult out;
  out.parts = {kd_nat.loss, kd_adv.loss};
  out.total = mtard_total(out.parts, w_nat, w_adv);

  scale_tensor(kd_nat.grad, w_nat);
  scale_tensor(kd_adv.grad, w_adv);
  Gradients g_nat = backward(student_spec, student, s_nat, kd_nat.grad);
  Gradients g_adv = backward(student_spec, student, s_adv, kd_adv.grad);
  out.student_grads = std::move(g_nat.params);
  add_into(out.student_grads, g_adv.params);

  if (want_input_grads) {
    Tensor tu_nat = teacher_kd_upstream(s_nat.logits, t_nat_logits, tau_s, tau_nat);
    Tensor tu_adv = teacher_kd_upstream(s_adv.logits, t_adv_logits, tau_s, tau_adv);
    scale_tensor(tu_nat, w_nat);
    scale_tensor(tu_adv, w_adv);
    Gradients tg_nat = backward(clean_spec, clean_teacher, t_nat_trace, tu_nat);
    Gradients tg_adv = backward(robust_spec, robust_teacher, t_adv_trace, tu_adv);
    out.x_nat_grad = std::move(g_nat.input);
    out.x_adv_grad = std::move(g_adv.input);
    for (std::size_t i = 0; i < out.x_nat_grad.data.size(); ++i)
      out.x_nat_grad.data[i] += tg_nat.input.data[i];
    for (std::size_t i = 0; i < out.x_adv_grad.data.size(); ++i)
      out.x_adv_grad.data[i] += tg_adv.input.data[i];
  }
  return out;
}

TrainResult distill_mtard(const NetworkSpec& student_spec, const NetworkSpec& clean_spec,
                          const NetworkParams& clean_teacher, const NetworkSpec& robust_spec,
                          const NetworkParams& robust_teacher, const Dataset& train,
                          const Dataset& test, const TrainConfig& cfg, const TrainHooks& hooks,
                          const TrainerState* resume) {
  cfg.validate();
  require(distill_mode(cfg.mode), ErrorKind::config, "distill_mtard: not a distillation mode");
  require(cfg.attack.loss == AttackLoss::cross_entropy, ErrorKind::config,
          "distill_mtard: inner maximization uses cross-entropy with hard labels");
  student_spec.validate();
  clean_spec.validate();
  robust_spec.validate();
  train.validate();
  test.validate();
  require(clean_spec.classes == student_spec.classes && robust_spec.classes == student_spec.classes,
          ErrorKind::shape_mismatch, "distill_mtard: teacher/student class count mismatch");
  require(train.classes == student_spec.classes, ErrorKind::shape_mismatch,
          "distill_mtard: dataset/model class count mismatch");
  require(clean_teacher.fingerprint == clean_spec.fingerprint(), ErrorKind::fingerprint_mismatch,
          "distill_mtard: clean teacher params do not match spec");
  require(robust_teacher.fingerprint == robust_spec.fingerprint(), ErrorKind::fingerprint_mismatch,
          "distill_mtard: robust teacher params do not match spec");

  const bool nlb = nlb_enabled(cfg.mode);
  const bool ebb = ebb_enabled(cfg.mode);
  TrainerState state = start_state(student_spec, cfg, resume);
  if (!nlb && !state.balance.initialized()) {
    // Fixed split (1 - alpha, alpha); the controller never moves it.
    state.balance.w_nat = 1.0 - cfg.balance.alpha;
    state.balance.w_adv = cfg.balance.alpha;
  }

  for (int epoch = state.next_epoch; epoch < cfg.epochs; ++epoch) {
    double lr = scheduled_lr(cfg.opt.lr, cfg.opt.decay_epochs, cfg.opt.decay_factor, epoch);
    double h_nat_sum = 0.0, h_adv_sum = 0.0, l_nat_sum = 0.0, l_adv_sum = 0.0, total_sum = 0.0;
    double rel_nat_sum = 0.0, rel_adv_sum = 0.0;
    std::size_t batch_count = 0, rel_count = 0;

    for (const auto& idx : epoch_batches(train.size(), cfg.batch_size, cfg.seed, epoch)) {
      Batch b = gather(train, idx);

      // Inner maximization: adversarial examples come from the student itself,
      // with the hard ground-truth labels.
      Tensor x_adv = pgd(student_spec, state.params, b.x, b.y, cfg.attack,
                         Rng::derive_key(cfg.seed, rng_tag::attack, static_cast<std::uint64_t>(epoch),
                                         static_cast<std::uint64_t>(batch_count)));
      emit(hooks, TrainEventKind::attack_generated, epoch, state.step);

      ForwardTrace s_nat = forward_trace(student_spec, state.params, b.x);
      ForwardTrace s_adv = forward_trace(student_spec, state.params, x_adv);
      Tensor t_nat_logits = forward(clean_spec, clean_teacher, b.x);
      Tensor t_adv_logits = forward(robust_spec, robust_teacher, x_adv);
      check_finite_logits(s_nat.logits, epoch, state.step);
      check_finite_logits(s_adv.logits, epoch, state.step);

      KdLossGrad kd_nat = kd_loss_with_grad(s_nat.logits, t_nat_logits, state.temps.tau_s,
                                            state.temps.tau_nat, cfg.balance.tau_squared_scale);
      KdLossGrad kd_adv = kd_loss_with_grad(s_adv.logits, t_adv_logits, state.temps.tau_s,
                                            state.temps.tau_adv, cfg.balance.tau_squared_scale);
      check_finite_loss(kd_nat.loss, epoch, state.step);
      check_finite_loss(kd_adv.loss, epoch, state.step);
      emit(hooks, TrainEventKind::losses_computed, epoch, state.step);

      if (state.step == 0 && !state.balance.initialized()) {
        if (nlb) {
          state.balance = record_initial(state.balance, kd_nat.loss, kd_adv.loss);
          emit(hooks, TrainEventKind::initial_recorded, epoch, state.step);
        } else if (kd_nat.loss > kLossFloor && kd_adv.loss > kLossFloor) {
          // Controllers are off; denominators are still recorded so the
          // relative-loss curves stay comparable across ablation modes.
          double w_nat_fixed = state.balance.w_nat, w_adv_fixed = state.balance.w_adv;
          state.balance = record_initial(state.balance, kd_nat.loss, kd_adv.loss);
          state.balance.w_nat = w_nat_fixed;
          state.balance.w_adv = w_adv_fixed;
          emit(hooks, TrainEventKind::initial_recorded, epoch, state.step);
        }
      }

      double rel_nat = std::nan(""), rel_adv = std::nan("");
      if (state.balance.initialized()) {
        auto [rn, ra] = relative_losses(state.balance, kd_nat.loss, kd_adv.loss);
        rel_nat = rn;
        rel_adv = ra;
        if (nlb) {
          auto [r_nat, r_adv] = relative_weights(rel_nat, rel_adv, cfg.balance.beta);
          state.balance = update_weights(state.balance, r_nat, r_adv);
          emit(hooks, TrainEventKind::weights_updated, epoch, state.step);
        }
      }

      DistillLossParts parts{kd_nat.loss, kd_adv.loss};
      double total = mtard_total(parts, state.balance.w_nat, state.balance.w_adv);

      scale_tensor(kd_nat.grad, state.balance.w_nat);
      scale_tensor(kd_adv.grad, state.balance.w_adv);
      Gradients g_nat = backward(student_spec, state.params, s_nat, kd_nat.grad);
      Gradients g_adv = backward(student_spec, state.params, s_adv, kd_adv.grad);
      std::vector<Tensor> grads = std::move(g_nat.params);
      add_into(grads, g_adv.params);
      sgd_step(state.params, state.velocity, grads, lr, cfg.opt.momentum, cfg.opt.weight_decay);
      apply_precision(state.params, cfg.precision);
      emit(hooks, TrainEventKind::params_stepped, epoch, state.step);

      double h_nat = batch_mean_entropy(t_nat_logits, state.temps.tau_nat);
      double h_adv = batch_mean_entropy(t_adv_logits, state.temps.tau_adv);
      if (ebb) {
        state.temps = update_temperatures(state.temps, h_nat, h_adv);
        emit(hooks, TrainEventKind::temperatures_updated, epoch, state.step);
      }

      h_nat_sum += h_nat;
      h_adv_sum += h_adv;
      l_nat_sum += kd_nat.loss;
      l_adv_sum += kd_adv.loss;
      total_sum += total;
      if (!std::isnan(rel_nat)) {
        rel_nat_sum += rel_nat;
        rel_adv_sum += rel_adv;
        ++rel_count;
      }
      ++batch_count;
      ++state.step;
    }

    MetricRecord rec = evaluate_epoch(student_spec, state.params, test, cfg, epoch);
    rec.snapshot.tau_nat = state.temps.tau_nat;
    rec.snapshot.tau_adv = state.temps.tau_adv;
    rec.snapshot.h_nat = h_nat_sum / static_cast<double>(batch_count);
    rec.snapshot.h_adv = h_adv_sum / static_cast<double>(batch_count);
    rec.snapshot.w_nat = state.balance.w_nat;
    rec.snapshot.w_adv = state.balance.w_adv;
    if (rel_count > 0) {
      rec.snapshot.rel_nat = rel_nat_sum / static_cast<double>(rel_count);
      rec.snapshot.rel_adv = rel_adv_sum / static_cast<double>(rel_count);
    }
    rec.snapshot.l_nat = l_nat_sum / static_cast<double>(batch_count);
    rec.snapshot.l_adv = l_adv_sum / static_cast<double>(batch_count);
    rec.snapshot.l_total = total_sum / static_cast<double>(batch_count);
    rec.snapshot.lr = lr;
    emit(hooks, TrainEventKind::epoch_evaluated, epoch, state.step);
    state.history.push_back(rec);
    track_best(state, rec);
    state.next_epoch = epoch + 1;
    if (hooks.on_epoch) hooks.on_epoch(state, rec);
    if (cfg.stop_after_epoch >= 0 && epoch >= cfg.stop_after_epoch)
      return finish(std::move(state), epoch + 1 < cfg.epochs);
  }
  return finish(std::move(state), false);
}

// --- trainer state persistence -------------------------------------------

namespace {

constexpr std::array<char, 4> kStateMagic = {'M', 'T', 'R', 'S'};
constexpr std::uint16_t kStateVersion = 1;

void write_params(binio::Writer& w, const NetworkParams& p) {
  w.u8(static_cast<std::uint8_t>(p.role));
  w.u64(p.fingerprint);
  w.u32(static_cast<std::uint32_t>(p.tensors.size()));
  for (const Tensor& t : p.tensors) {
    w.u8(static_cast<std::uint8_t>(t.rank()));
    for (std::size_t d : t.shape) w.u64(d);
    w.bytes(t.data.data(), t.data.size() * sizeof(double));
  }
}

NetworkParams read_params(binio::Reader& r) {
  NetworkParams p;
  p.role = static_cast<Role>(r.u8());
  p.fingerprint = r.u64();
  std::uint32_t count = r.u32();
  require(count <= 4096, ErrorKind::parse, "state: tensor count implausible");
  for (std::uint32_t i = 0; i < count; ++i) {
    std::size_t rank = r.u8();
    require(rank >= 1 && rank <= 8, ErrorKind::parse, "state: tensor rank implausible");
    std::vector<std::size_t> shape(rank);
    std::size_t n = 1;
    for (std::size_t& d : shape) {
      d = r.u64();
      n *= d;
    }
    require(n <= (1ull << 30), ErrorKind::parse, "state: tensor too large");
    std::vector<double> data(n);
    r.bytes(data.data(), n * sizeof(double));
    p.tensors.emplace_back(std::move(shape), std::move(data));
  }
  return p;
}

void write_record(binio::Writer& w, const MetricRecord& rec) {
  w.i32(rec.epoch);
  w.f64(rec.clean_acc);
  w.str(rec.selection_attack);
  w.f64(rec.pi_nat);
  w.f64(rec.pi_adv);
  w.f64(rec.w_robust);
  w.u32(static_cast<std::uint32_t>(rec.robust_acc.size()));
  for (const auto& [name, acc] : rec.robust_acc) {
    w.str(name);
    w.f64(acc);
  }
  const ControllerSnapshot& s = rec.snapshot;
  for (double v : {s.tau_nat, s.tau_adv, s.h_nat, s.h_adv, s.w_nat, s.w_adv, s.rel_nat, s.rel_adv,
                   s.l_nat, s.l_adv, s.l_total, s.lr})
    w.f64(v);
}

MetricRecord read_record(binio::Reader& r) {
  MetricRecord rec;
  rec.epoch = r.i32();
  rec.clean_acc = r.f64();
  rec.selection_attack = r.str();
  rec.pi_nat = r.f64();
  rec.pi_adv = r.f64();
  rec.w_robust = r.f64();
  std::uint32_t n = r.u32();
  require(n <= 64, ErrorKind::parse, "state: robust accuracy map implausible");
  for (std::uint32_t i = 0; i < n; ++i) {
    std::string name = r.str();
    rec.robust_acc[name] = r.f64();
  }
  ControllerSnapshot& s = rec.snapshot;
  for (double* v : {&s.tau_nat, &s.tau_adv, &s.h_nat, &s.h_adv, &s.w_nat, &s.w_adv, &s.rel_nat,
                    &s.rel_adv, &s.l_nat, &s.l_adv, &s.l_total, &s.lr})
    *v = r.f64();
  return rec;
}

}  // namespace

void save_trainer_state(const TrainerState& state, const std::string& path) {
  binio::Writer w(path);
  w.bytes(kStateMagic.data(), 4);
  w.u16(kStateVersion);
  w.i32(state.next_epoch);
  w.u64(static_cast<std::uint64_t>(state.step));
  for (double v : {state.temps.tau_nat, state.temps.tau_adv, state.temps.r_tau, state.temps.tau_min,
                   state.temps.tau_max, state.temps.tau_s})
    w.f64(v);
  for (double v : {state.balance.l_nat_0, state.balance.l_adv_0, state.balance.w_nat,
                   state.balance.w_adv, state.balance.beta, state.balance.r_w})
    w.f64(v);
  w.u8(state.balance.initialized() ? 1 : 0);
  w.i32(state.best_epoch);
  w.f64(state.best_w_robust);
  write_params(w, state.params);
  w.u32(static_cast<std::uint32_t>(state.velocity.size()));
  for (const Tensor& t : state.velocity) {
    w.u8(static_cast<std::uint8_t>(t.rank()));
    for (std::size_t d : t.shape) w.u64(d);
    w.bytes(t.data.data(), t.data.size() * sizeof(double));
  }
  w.u8(state.best_epoch >= 0 ? 1 : 0);
  if (state.best_epoch >= 0) write_params(w, state.best_params);
  w.u32(static_cast<std::uint32_t>(state.history.size()));
  for (const MetricRecord& rec : state.history) write_record(w, rec);
  w.close();
}

TrainerState load_trainer_state(const std::string& path, const NetworkSpec& spec) {
  binio::Reader r(path);
  std::array<char, 4> magic{};
  r.bytes(magic.data(), 4);
  require(magic == kStateMagic, ErrorKind::parse, "bad trainer state magic: " + path);
  require(r.u16() == kStateVersion, ErrorKind::version_mismatch,
          "unsupported trainer state version: " + path);
  TrainerState state;
  state.next_epoch = r.i32();
  state.step = static_cast<long>(r.u64());
  for (double* v : {&state.temps.tau_nat, &state.temps.tau_adv, &state.temps.r_tau,
                    &state.temps.tau_min, &state.temps.tau_max, &state.temps.tau_s})
    *v = r.f64();
  for (double* v : {&state.balance.l_nat_0, &state.balance.l_adv_0, &state.balance.w_nat,
                    &state.balance.w_adv, &state.balance.beta, &state.balance.r_w})
    *v = r.f64();
  state.balance.init_done = r.u8() != 0;
  state.best_epoch = r.i32();
  state.best_w_robust = r.f64();
  state.params = read_params(r);
  require(state.params.fingerprint == spec.fingerprint(), ErrorKind::fingerprint_mismatch,
          "trainer state was written for a different network spec: " + path);
  std::uint32_t vcount = r.u32();
  require(vcount == state.params.tensors.size(), ErrorKind::parse,
          "trainer state velocity layout mismatch: " + path);
  for (std::uint32_t i = 0; i < vcount; ++i) {
    std::size_t rank = r.u8();
    require(rank >= 1 && rank <= 8, ErrorKind::parse, "state: velocity rank implausible");
    std::vector<std::size_t> shape(rank);
    std::size_t n = 1;
    for (std::size_t& d : shape) {
      d = r.u64();
      n *= d;
    }
    require(n <= (1ull << 30), ErrorKind::parse, "state: velocity tensor too large");
    std::vector<double> data(n);
    r.bytes(data.data(), n * sizeof(double));
    state.velocity.emplace_back(std::move(shape), std::move(data));
  }
  if (r.u8() != 0) state.best_params = read_params(r);
  std::uint32_t hist = r.u32();
  require(hist <= (1u << 20), ErrorKind::parse, "state: history length implausible");
  for (std::uint32_t i = 0; i < hist; ++i) state.history.push_back(read_record(r));
  return state;
}

}  // namespace mtard
