#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "mtard/attack.hpp"
#include "mtard/dataset.hpp"
#include "mtard/net.hpp"

namespace mtard {

/// Controller values logged alongside the accuracy numbers each epoch.
/// Entropies and losses are epoch means; temperatures and weights are the
/// values at epoch end. NaN marks a field that does not apply to the run mode.
struct ControllerSnapshot {
  double tau_nat = std::nan("");
  double tau_adv = std::nan("");
  double h_nat = std::nan("");
  double h_adv = std::nan("");
  double w_nat = std::nan("");
  double w_adv = std::nan("");
  double rel_nat = std::nan("");
  double rel_adv = std::nan("");
  double l_nat = std::nan("");
  double l_adv = std::nan("");
  double l_total = std::nan("");
  double lr = std::nan("");
};

struct MetricRecord {
  int epoch = 0;
  double clean_acc = 0.0;
  std::map<std::string, double> robust_acc;  // per attack name
  std::string selection_attack;              // key used for w_robust
  double pi_nat = 0.5;
  double pi_adv = 0.5;
  double w_robust = 0.0;
  ControllerSnapshot snapshot;
};

/// Fraction of argmax-correct predictions; ties break to the lowest class index.
double accuracy(const NetworkSpec& spec, const NetworkParams& params, const Dataset& ds);

/// Accuracy on adversarially perturbed inputs, attack run white-box against
/// the evaluated params. Deterministic given seed.
double robust_accuracy(const NetworkSpec& spec, const NetworkParams& params, const Dataset& ds,
                       const AttackConfig& attack, std::uint64_t seed);

/// pi_nat * clean + pi_adv * robust; weights must be >= 0 and sum to 1.
double w_robust(double clean_acc, double robust_acc, double pi_nat, double pi_adv);

/// Epoch of maximal w_robust, earliest on ties.
int select_best_checkpoint(const std::vector<MetricRecord>& history);

std::string metric_record_to_json(const MetricRecord& rec);
MetricRecord metric_record_from_json(const std::string& line);

void write_metrics_jsonl(const std::vector<MetricRecord>& history, const std::string& path);
std::vector<MetricRecord> read_metrics_jsonl(const std::string& path);

}  // namespace mtard
