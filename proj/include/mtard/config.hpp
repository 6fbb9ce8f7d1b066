#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "mtard/dataset.hpp"
#include "mtard/net.hpp"
#include "mtard/trainer.hpp"

namespace mtard {

/// Run configuration: sectioned key/value text checked against a fixed schema.
/// Every schema key always has a value (file entries overlay the defaults), and
/// values keep their source spelling, so "8/255" survives re-serialization and
/// the canonical text (and its hash) is stable.
class Config {
public:
  Config();  // all defaults

  static Config parse_text(const std::string& text);
  static Config load(const std::string& path);

  const std::string& get(const std::string& key) const;  // key = "section.name"
  void set(const std::string& key, const std::string& value);

  std::int64_t get_int(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;
  double get_real(const std::string& key) const;  // accepts rationals like 8/255
  bool get_bool(const std::string& key) const;
  std::vector<int> get_int_list(const std::string& key) const;

  std::string canonical_text() const;
  std::string hash_hex() const;

private:
  std::map<std::string, std::string> values_;
};

/// "a/b" or any strtod-accepted literal.
double parse_real(const std::string& text, const std::string& field);

/// "mlp:32,32" (hidden sizes; empty list = linear) or "conv:8,16" (channel
/// counts for 3x3 stride-1 convs). Input shape and class count come from data.
NetworkSpec parse_arch(const std::string& text, const std::vector<std::size_t>& input_shape,
                       std::size_t classes);

/// Resolves [data] into (train, test). subset_override > 0 caps loaded files.
std::pair<Dataset, Dataset> build_datasets(const Config& cfg, std::uint64_t seed,
                                           std::size_t subset_override = 0);

/// Assembles the trainer configuration from [run]/[optimizer]/[attack]/[balance]/[eval].
TrainConfig build_train_config(const Config& cfg);

/// Named evaluation attacks from [eval] (fgsm, pgd_sat, pgd_trades, cw).
std::vector<std::pair<std::string, AttackConfig>> build_eval_attacks(const Config& cfg);

/// The [eval].selection attack (also used for per-epoch checkpoint selection).
std::pair<std::string, AttackConfig> build_selection_attack(const Config& cfg);

/// Prepends $MTARD_DATA_DIR to relative paths that do not exist as given.
std::string resolve_data_path(const std::string& path);

}  // namespace mtard
