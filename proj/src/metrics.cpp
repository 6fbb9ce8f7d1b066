#include "mtard/metrics.hpp"

#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "mtard/rng.hpp"

namespace mtard {

using ordered_json = nlohmann::ordered_json;

namespace {

std::size_t argmax_lowest(std::span<const double> row) {
  std::size_t best = 0;
  for (std::size_t k = 1; k < row.size(); ++k)
    if (row[k] > row[best]) best = k;
  return best;
}

std::size_t count_correct(const NetworkSpec& spec, const NetworkParams& params, const Tensor& x,
                          const std::vector<std::uint32_t>& y) {
  Tensor logits = forward(spec, params, x);
  std::size_t correct = 0;
  for (std::size_t r = 0; r < logits.rows(); ++r)
    if (argmax_lowest(logits.row(r)) == y[r]) ++correct;
  return correct;
}

constexpr std::size_t kEvalBatch = 256;

}  // namespace

double accuracy(const NetworkSpec& spec, const NetworkParams& params, const Dataset& ds) {
  require(ds.size() > 0, ErrorKind::invalid_input, "accuracy: empty dataset");
  require(ds.classes == spec.classes, ErrorKind::shape_mismatch,
          "accuracy: dataset/model class count mismatch");
  std::size_t correct = 0;
  for (std::size_t start = 0; start < ds.size(); start += kEvalBatch) {
    std::size_t n = std::min(kEvalBatch, ds.size() - start);
    Tensor x = Tensor::zeros({n, ds.feature_dim()});
    std::vector<std::uint32_t> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::copy(ds.features.row(start + i).begin(), ds.features.row(start + i).end(),
                x.row(i).begin());
      y[i] = ds.labels[start + i];
    }
    correct += count_correct(spec, params, x, y);
  }
  return static_cast<double>(correct) / static_cast<double>(ds.size());
}

double robust_accuracy(const NetworkSpec& spec, const NetworkParams& params, const Dataset& ds,
                       const AttackConfig& attack, std::uint64_t seed) {
  require(ds.size() > 0, ErrorKind::invalid_input, "robust_accuracy: empty dataset");
  require(ds.classes == spec.classes, ErrorKind::shape_mismatch,
          "robust_accuracy: dataset/model class count mismatch");
  attack.validate();
  std::size_t correct = 0;
  std::size_t batch_no = 0;
  for (std::size_t start = 0; start < ds.size(); start += kEvalBatch, ++batch_no) {
    std::size_t n = std::min(kEvalBatch, ds.size() - start);
    Tensor x = Tensor::zeros({n, ds.feature_dim()});
    std::vector<std::uint32_t> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::copy(ds.features.row(start + i).begin(), ds.features.row(start + i).end(),
                x.row(i).begin());
      y[i] = ds.labels[start + i];
    }
    Tensor adv = run_attack(spec, params, x, y, attack,
                            Rng::derive_key(seed, rng_tag::eval, batch_no));
    correct += count_correct(spec, params, adv, y);
  }
  return static_cast<double>(correct) / static_cast<double>(ds.size());
}

double w_robust(double clean_acc, double robust_acc, double pi_nat, double pi_adv) {
  require(pi_nat >= 0.0 && pi_adv >= 0.0, ErrorKind::invalid_input,
          "w_robust: weights must be >= 0");
  require(std::abs(pi_nat + pi_adv - 1.0) <= 1e-12, ErrorKind::invalid_input,
          "w_robust: weights must sum to 1");
  return pi_nat * clean_acc + pi_adv * robust_acc;
}

int select_best_checkpoint(const std::vector<MetricRecord>& history) {
  require(!history.empty(), ErrorKind::invalid_input, "select_best_checkpoint: empty history");
  std::size_t best = 0;
  for (std::size_t i = 1; i < history.size(); ++i)
    if (history[i].w_robust > history[best].w_robust) best = i;
  return history[best].epoch;
}

namespace {

void put_optional(ordered_json& j, const char* key, double v) {
  if (!std::isnan(v)) j[key] = v;
}

double get_optional(const ordered_json& j, const char* key) {
  return j.contains(key) ? j[key].get<double>() : std::nan("");
}

}  // namespace

std::string metric_record_to_json(const MetricRecord& rec) {
  ordered_json j;
  j["epoch"] = rec.epoch;
  j["clean_acc"] = rec.clean_acc;
  ordered_json robust = ordered_json::object();
  for (const auto& [name, acc] : rec.robust_acc) robust[name] = acc;
  j["robust_acc"] = robust;
  j["selection"] = rec.selection_attack;
  j["pi_nat"] = rec.pi_nat;
  j["pi_adv"] = rec.pi_adv;
  j["w_robust"] = rec.w_robust;
  put_optional(j, "tau_nat", rec.snapshot.tau_nat);
  put_optional(j, "tau_adv", rec.snapshot.tau_adv);
  put_optional(j, "h_nat", rec.snapshot.h_nat);
  put_optional(j, "h_adv", rec.snapshot.h_adv);
  put_optional(j, "w_nat", rec.snapshot.w_nat);
  put_optional(j, "w_adv", rec.snapshot.w_adv);
  put_optional(j, "rel_nat", rec.snapshot.rel_nat);
  put_optional(j, "rel_adv", rec.snapshot.rel_adv);
  put_optional(j, "l_nat", rec.snapshot.l_nat);
  put_optional(j, "l_adv", rec.snapshot.l_adv);
  put_optional(j, "l_total", rec.snapshot.l_total);
  put_optional(j, "lr", rec.snapshot.lr);
  return j.dump();
}

MetricRecord metric_record_from_json(const std::string& line) {
  ordered_json j;
  try {
    j = ordered_json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::parse, std::string("bad metric record: ") + e.what());
  }
  MetricRecord rec;
  rec.epoch = j.at("epoch").get<int>();
  rec.clean_acc = j.at("clean_acc").get<double>();
  for (const auto& [name, acc] : j.at("robust_acc").items())
    rec.robust_acc[name] = acc.get<double>();
  rec.selection_attack = j.at("selection").get<std::string>();
  rec.pi_nat = j.at("pi_nat").get<double>();
  rec.pi_adv = j.at("pi_adv").get<double>();
  rec.w_robust = j.at("w_robust").get<double>();
  rec.snapshot.tau_nat = get_optional(j, "tau_nat");
  rec.snapshot.tau_adv = get_optional(j, "tau_adv");
  rec.snapshot.h_nat = get_optional(j, "h_nat");
  rec.snapshot.h_adv = get_optional(j, "h_adv");
  rec.snapshot.w_nat = get_optional(j, "w_nat");
  rec.snapshot.w_adv = get_optional(j, "w_adv");
  rec.snapshot.rel_nat = get_optional(j, "rel_nat");
  rec.snapshot.rel_adv = get_optional(j, "rel_adv");
  rec.snapshot.l_nat = get_optional(j, "l_nat");
  rec.snapshot.l_adv = get_optional(j, "l_adv");
  rec.snapshot.l_total = get_optional(j, "l_total");
  rec.snapshot.lr = get_optional(j, "lr");
  return rec;
}

void write_metrics_jsonl(const std::vector<MetricRecord>& history, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  require(out.good(), ErrorKind::io, "cannot open for writing: " + path);
  for (const MetricRecord& rec : history) out << metric_record_to_json(rec) << "\n";
  out.close();
  require(out.good(), ErrorKind::io, "write failed: " + path);
}

std::vector<MetricRecord> read_metrics_jsonl(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), ErrorKind::io, "cannot open for reading: " + path);
  std::vector<MetricRecord> history;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    history.push_back(metric_record_from_json(line));
  }
  return history;
}

}  // namespace mtard
