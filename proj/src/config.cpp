#include "mtard/config.hpp"

#include <algorithm>
#include <array>
#include <cerrno>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "mtard/rng.hpp"

namespace mtard {

namespace {

enum class ValueType { string, u64, integer, real, boolean, int_list };

struct SchemaEntry {
  const char* key;  // "section.name"
  const char* default_value;
  ValueType type;
  const char* choices;  // nullptr or comma-separated allowed values
};

// Canonical key order; defaults carry the published training constants.
constexpr std::array<SchemaEntry, 54> kSchema = {{
    {"run.mode", "mtard", ValueType::string,
     "natural,sat,mtard,mtard-no-ebb,mtard-no-nlb,baseline-fixed"},
    {"run.seed", "1", ValueType::u64, nullptr},
    {"run.out", "", ValueType::string, nullptr},
    {"data.kind", "two-moons", ValueType::string, "two-moons,blobs,idx,cifar,cache"},
    {"data.train_n", "400", ValueType::integer, nullptr},
    {"data.test_n", "200", ValueType::integer, nullptr},
    {"data.noise", "0.1", ValueType::real, nullptr},
    {"data.spread", "0.1", ValueType::real, nullptr},
    {"data.classes", "3", ValueType::integer, nullptr},
    {"data.path", "", ValueType::string, nullptr},
    {"data.labels_path", "", ValueType::string, nullptr},
    {"data.test_path", "", ValueType::string, nullptr},
    {"data.test_labels_path", "", ValueType::string, nullptr},
    {"data.subset", "0", ValueType::integer, nullptr},
    {"model.arch", "mlp:64,64", ValueType::string, nullptr},
    {"model.student", "mlp:32,32", ValueType::string, nullptr},
    {"model.clean_teacher", "", ValueType::string, nullptr},
    {"model.robust_teacher", "", ValueType::string, nullptr},
    {"optimizer.lr", "0.1", ValueType::real, nullptr},
    {"optimizer.momentum", "0.9", ValueType::real, nullptr},
    {"optimizer.weight_decay", "2e-4", ValueType::real, nullptr},
    {"optimizer.epochs", "60", ValueType::integer, nullptr},
    {"optimizer.batch_size", "128", ValueType::integer, nullptr},
    {"optimizer.lr_decay_epochs", "40,50", ValueType::int_list, nullptr},
    {"optimizer.lr_decay_factor", "0.1", ValueType::real, nullptr},
    {"optimizer.precision", "f64", ValueType::string, "f32,f64"},
    {"optimizer.checkpoint_every", "0", ValueType::integer, nullptr},
    {"attack.epsilon", "8/255", ValueType::real, nullptr},
    {"attack.step_size", "2/255", ValueType::real, nullptr},
    {"attack.steps", "10", ValueType::integer, nullptr},
    {"attack.random_start_scale", "0.001", ValueType::real, nullptr},
    {"balance.r_tau", "0.001", ValueType::real, nullptr},
    {"balance.tau_min", "1", ValueType::real, nullptr},
    {"balance.tau_max", "10", ValueType::real, nullptr},
    {"balance.tau_init", "1", ValueType::real, nullptr},
    {"balance.tau_s", "1", ValueType::real, nullptr},
    {"balance.beta", "1", ValueType::real, nullptr},
    {"balance.r_w", "0.025", ValueType::real, nullptr},
    {"balance.alpha", "0.5", ValueType::real, nullptr},
    {"balance.tau_squared_scale", "false", ValueType::boolean, nullptr},
    {"distill.clean_teacher", "", ValueType::string, nullptr},
    {"distill.robust_teacher", "", ValueType::string, nullptr},
    {"eval.attacks", "pgd_sat", ValueType::string, nullptr},
    {"eval.selection", "pgd_sat", ValueType::string, "fgsm,pgd_sat,pgd_trades,cw"},
    {"eval.epsilon", "8/255", ValueType::real, nullptr},
    {"eval.random_start_scale", "0.001", ValueType::real, nullptr},
    {"eval.pgd_sat_steps", "20", ValueType::integer, nullptr},
    {"eval.pgd_sat_step_size", "2/255", ValueType::real, nullptr},
    {"eval.pgd_trades_steps", "20", ValueType::integer, nullptr},
    {"eval.pgd_trades_step_size", "0.003", ValueType::real, nullptr},
    {"eval.cw_steps", "30", ValueType::integer, nullptr},
    {"eval.cw_step_size", "2/255", ValueType::real, nullptr},
    {"eval.pi_nat", "0.5", ValueType::real, nullptr},
    {"eval.pi_adv", "0.5", ValueType::real, nullptr},
}};

const SchemaEntry* find_entry(const std::string& key) {
  for (const SchemaEntry& e : kSchema)
    if (key == e.key) return &e;
  return nullptr;
}

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::int64_t parse_int(const std::string& text, const std::string& field) {
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  require(ec == std::errc() && ptr == text.data() + text.size(), ErrorKind::config,
          field + ": expected an integer, got '" + text + "'");
  return v;
}

void check_value(const SchemaEntry& e, const std::string& value) {
  std::string field(e.key);
  switch (e.type) {
    case ValueType::string: break;
    case ValueType::u64:
    case ValueType::integer: parse_int(value, field); break;
    case ValueType::real: parse_real(value, field); break;
    case ValueType::boolean:
      require(value == "true" || value == "false", ErrorKind::config,
              field + ": expected true or false, got '" + value + "'");
      break;
    case ValueType::int_list: {
      std::stringstream ss(value);
      std::string item;
      while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) parse_int(item, field);
      }
      break;
    }
  }
  if (e.choices) {
    std::string allowed(e.choices);
    std::stringstream ss(allowed);
    std::string item;
    bool ok = false;
    while (std::getline(ss, item, ','))
      if (item == value) ok = true;
    require(ok, ErrorKind::config,
            field + ": unknown value '" + value + "' (allowed: " + allowed + ")");
  }
}

}  // namespace

double parse_real(const std::string& text, const std::string& field) {
  std::string t = trim(text);
  require(!t.empty(), ErrorKind::config, field + ": expected a number, got empty value");
  auto slash = t.find('/');
  if (slash != std::string::npos) {
    double num = parse_real(t.substr(0, slash), field);
    double den = parse_real(t.substr(slash + 1), field);
    require(den != 0.0, ErrorKind::config, field + ": zero denominator in '" + text + "'");
    return num / den;
  }
  errno = 0;
  char* end = nullptr;
  double v = std::strtod(t.c_str(), &end);
  require(errno == 0 && end == t.c_str() + t.size(), ErrorKind::config,
          field + ": expected a number, got '" + text + "'");
  return v;
}

Config::Config() {
  for (const SchemaEntry& e : kSchema) values_[e.key] = e.default_value;
}

Config Config::parse_text(const std::string& text) {
  Config cfg;
  std::istringstream in(text);
  std::string line, section;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string s = trim(line);
    if (s.empty() || s[0] == '#' || s[0] == ';') continue;
    if (s.front() == '[') {
      require(s.back() == ']', ErrorKind::config,
              "config line " + std::to_string(line_no) + ": malformed section header");
      section = trim(s.substr(1, s.size() - 2));
      require(!section.empty(), ErrorKind::config,
              "config line " + std::to_string(line_no) + ": empty section name");
      continue;
    }
    auto eq = s.find('=');
    require(eq != std::string::npos, ErrorKind::config,
            "config line " + std::to_string(line_no) + ": expected key = value");
    std::string key = trim(s.substr(0, eq));
    std::string value = trim(s.substr(eq + 1));
    require(!section.empty(), ErrorKind::config,
            "config line " + std::to_string(line_no) + ": key outside any [section]");
    cfg.set(section + "." + key, value);
  }
  return cfg;
}

Config Config::load(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), ErrorKind::usage, "cannot open config: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_text(ss.str());
}

const std::string& Config::get(const std::string& key) const {
  auto it = values_.find(key);
  require(it != values_.end(), ErrorKind::config, "unknown config key: " + key);
  return it->second;
}

void Config::set(const std::string& key, const std::string& value) {
  const SchemaEntry* e = find_entry(key);
  require(e != nullptr, ErrorKind::config, "unknown config key: " + key);
  check_value(*e, value);
  values_[key] = value;
}

std::int64_t Config::get_int(const std::string& key) const { return parse_int(get(key), key); }

std::uint64_t Config::get_u64(const std::string& key) const {
  std::int64_t v = get_int(key);
  require(v >= 0, ErrorKind::config, key + ": expected a nonnegative integer");
  return static_cast<std::uint64_t>(v);
}

double Config::get_real(const std::string& key) const { return parse_real(get(key), key); }

bool Config::get_bool(const std::string& key) const { return get(key) == "true"; }

std::vector<int> Config::get_int_list(const std::string& key) const {
  std::vector<int> out;
  std::stringstream ss(get(key));
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(static_cast<int>(parse_int(item, key)));
  }
  return out;
}

std::string Config::canonical_text() const {
  std::string out;
  std::string section;
  for (const SchemaEntry& e : kSchema) {
    std::string key(e.key);
    auto dot = key.find('.');
    std::string sec = key.substr(0, dot);
    if (sec != section) {
      if (!out.empty()) out += "\n";
      out += "[" + sec + "]\n";
      section = sec;
    }
    out += key.substr(dot + 1) + " = " + values_.at(key) + "\n";
  }
  return out;
}

std::string Config::hash_hex() const {
  std::string text = canonical_text();
  std::uint64_t h = fnv1a64(text.data(), text.size());
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

NetworkSpec parse_arch(const std::string& text, const std::vector<std::size_t>& input_shape,
                       std::size_t classes) {
  auto colon = text.find(':');
  std::string family = colon == std::string::npos ? text : text.substr(0, colon);
  std::string rest = colon == std::string::npos ? "" : text.substr(colon + 1);
  std::vector<std::size_t> sizes;
  std::stringstream ss(rest);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    std::int64_t v = parse_int(item, "model arch '" + text + "'");
    require(v >= 1, ErrorKind::config, "model arch '" + text + "': sizes must be >= 1");
    sizes.push_back(static_cast<std::size_t>(v));
  }
  if (family == "mlp") return mlp_spec(Tensor::numel(input_shape), sizes, classes);
  if (family == "conv") {
    require(input_shape.size() == 3, ErrorKind::config,
            "model arch '" + text + "': conv needs image-shaped data ([C,H,W])");
    require(!sizes.empty(), ErrorKind::config, "model arch '" + text + "': conv needs channel list");
    return conv_spec(input_shape, sizes, classes);
  }
  fail(ErrorKind::config, "model arch '" + text + "': unknown family (use mlp:... or conv:...)");
}

std::string resolve_data_path(const std::string& path) {
  if (path.empty()) return path;
  std::filesystem::path p(path);
  if (p.is_absolute() || std::filesystem::exists(p)) return path;
  if (const char* base = std::getenv("MTARD_DATA_DIR")) {
    std::filesystem::path candidate = std::filesystem::path(base) / p;
    if (std::filesystem::exists(candidate)) return candidate.string();
  }
  return path;
}

std::pair<Dataset, Dataset> build_datasets(const Config& cfg, std::uint64_t seed,
                                           std::size_t subset_override) {
  std::string kind = cfg.get("data.kind");
  std::size_t subset = subset_override > 0 ? subset_override
                                           : static_cast<std::size_t>(cfg.get_int("data.subset"));
  std::uint64_t data_seed = Rng::derive_key(seed, rng_tag::data);

  if (kind == "two-moons" || kind == "blobs") {
    auto train_n = static_cast<std::size_t>(cfg.get_int("data.train_n"));
    auto test_n = static_cast<std::size_t>(cfg.get_int("data.test_n"));
    require(train_n > 0 && test_n > 0, ErrorKind::config,
            "data.train_n/data.test_n: must be positive");
    Dataset all;
    if (kind == "two-moons") {
      all = gen_two_moons(train_n + test_n, cfg.get_real("data.noise"), data_seed);
    } else {
      auto classes = static_cast<std::size_t>(cfg.get_int("data.classes"));
      all = gen_blobs(train_n + test_n, classes, cfg.get_real("data.spread"), data_seed);
    }
    return stratified_split(all, train_n, test_n, data_seed);
  }

  std::string path = cfg.get("data.path");
  std::string test_path = cfg.get("data.test_path");
  require(!path.empty(), ErrorKind::config, "data.path: required for kind '" + kind + "'");
  require(!test_path.empty(), ErrorKind::config, "data.test_path: required for kind '" + kind + "'");
  path = resolve_data_path(path);
  test_path = resolve_data_path(test_path);

  if (kind == "idx") {
    std::string labels = cfg.get("data.labels_path");
    std::string test_labels = cfg.get("data.test_labels_path");
    require(!labels.empty(), ErrorKind::config, "data.labels_path: required for kind 'idx'");
    require(!test_labels.empty(), ErrorKind::config,
            "data.test_labels_path: required for kind 'idx'");
    Dataset train = load_idx(path, resolve_data_path(labels), 0, subset);
    Dataset test = load_idx(test_path, resolve_data_path(test_labels), train.classes, subset);
    train.split = Split::train;
    test.split = Split::test;
    return {std::move(train), std::move(test)};
  }
  if (kind == "cifar") {
    Dataset train = load_cifar_binary(path, 10, subset);
    Dataset test = load_cifar_binary(test_path, 10, subset);
    train.split = Split::train;
    test.split = Split::test;
    return {std::move(train), std::move(test)};
  }
  // cache
  Dataset train = load_dataset(path);
  Dataset test = load_dataset(test_path);
  return {std::move(train), std::move(test)};
}

std::vector<std::pair<std::string, AttackConfig>> build_eval_attacks(const Config& cfg) {
  double eps = cfg.get_real("eval.epsilon");
  double rss = cfg.get_real("eval.random_start_scale");
  std::vector<std::pair<std::string, AttackConfig>> out;
  std::stringstream ss(cfg.get("eval.attacks"));
  std::string name;
  while (std::getline(ss, name, ',')) {
    name = trim(name);
    if (name.empty()) continue;
    AttackConfig a;
    a.epsilon = eps;
    a.random_start_scale = rss;
    if (name == "fgsm") {
      a.kind = AttackKind::fgsm;
      a.steps = 1;
    } else if (name == "pgd_sat") {
      a.kind = AttackKind::pgd;
      a.steps = static_cast<int>(cfg.get_int("eval.pgd_sat_steps"));
      a.step_size = cfg.get_real("eval.pgd_sat_step_size");
    } else if (name == "pgd_trades") {
      a.kind = AttackKind::pgd;
      a.steps = static_cast<int>(cfg.get_int("eval.pgd_trades_steps"));
      a.step_size = cfg.get_real("eval.pgd_trades_step_size");
    } else if (name == "cw") {
      a.kind = AttackKind::cw;
      a.loss = AttackLoss::cw_margin;
      a.steps = static_cast<int>(cfg.get_int("eval.cw_steps"));
      a.step_size = cfg.get_real("eval.cw_step_size");
    } else {
      fail(ErrorKind::config, "eval.attacks: unknown attack '" + name + "'");
    }
    a.validate();
    out.emplace_back(name, a);
  }
  require(!out.empty(), ErrorKind::config, "eval.attacks: need at least one attack");
  return out;
}

std::pair<std::string, AttackConfig> build_selection_attack(const Config& cfg) {
  std::string want = cfg.get("eval.selection");
  for (auto& [name, attack] : build_eval_attacks(cfg))
    if (name == want) return {name, attack};
  fail(ErrorKind::config, "eval.selection: '" + want + "' is not listed in eval.attacks");
}

TrainConfig build_train_config(const Config& cfg) {
  TrainConfig tc;
  tc.mode = train_mode_from(cfg.get("run.mode"));
  tc.epochs = static_cast<int>(cfg.get_int("optimizer.epochs"));
  tc.batch_size = static_cast<int>(cfg.get_int("optimizer.batch_size"));
  tc.seed = cfg.get_u64("run.seed");
  tc.opt.lr = cfg.get_real("optimizer.lr");
  tc.opt.momentum = cfg.get_real("optimizer.momentum");
  tc.opt.weight_decay = cfg.get_real("optimizer.weight_decay");
  tc.opt.decay_epochs = cfg.get_int_list("optimizer.lr_decay_epochs");
  tc.opt.decay_factor = cfg.get_real("optimizer.lr_decay_factor");
  tc.precision = cfg.get("optimizer.precision") == "f32" ? Precision::f32 : Precision::f64;

  tc.attack.kind = AttackKind::pgd;
  tc.attack.epsilon = cfg.get_real("attack.epsilon");
  tc.attack.step_size = cfg.get_real("attack.step_size");
  tc.attack.steps = static_cast<int>(cfg.get_int("attack.steps"));
  tc.attack.random_start_scale = cfg.get_real("attack.random_start_scale");

  tc.balance.r_tau = cfg.get_real("balance.r_tau");
  tc.balance.tau_min = cfg.get_real("balance.tau_min");
  tc.balance.tau_max = cfg.get_real("balance.tau_max");
  tc.balance.tau_init = cfg.get_real("balance.tau_init");
  tc.balance.tau_s = cfg.get_real("balance.tau_s");
  tc.balance.beta = cfg.get_real("balance.beta");
  tc.balance.r_w = cfg.get_real("balance.r_w");
  tc.balance.alpha = cfg.get_real("balance.alpha");
  tc.balance.tau_squared_scale = cfg.get_bool("balance.tau_squared_scale");

  auto [sel_name, sel_attack] = build_selection_attack(cfg);
  tc.eval.attack = sel_attack;
  tc.eval.attack_name = sel_name;
  tc.eval.pi_nat = cfg.get_real("eval.pi_nat");
  tc.eval.pi_adv = cfg.get_real("eval.pi_adv");

  tc.validate();
  return tc;
}

}  // namespace mtard
