#include "mtard/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "mtard/config.hpp"
#include "mtard/report.hpp"
#include "mtard/rng.hpp"

namespace mtard::cli {

namespace {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

struct CommonOpts {
  std::string config_path;
  std::string out;
  std::string mode;
  std::int64_t seed = -1;
  std::int64_t subset = 0;
  std::int64_t stop_after = -1;
  bool resume = false;
};

Config load_effective_config(const CommonOpts& opts) {
  Config cfg = opts.config_path.empty() ? Config() : Config::load(opts.config_path);
  if (opts.seed >= 0) cfg.set("run.seed", std::to_string(opts.seed));
  if (!opts.out.empty()) cfg.set("run.out", opts.out);
  if (!opts.mode.empty()) cfg.set("run.mode", opts.mode);
  if (opts.subset > 0) cfg.set("data.subset", std::to_string(opts.subset));
  return cfg;
}

fs::path require_out_dir(const Config& cfg) {
  std::string out = cfg.get("run.out");
  require(!out.empty(), ErrorKind::config, "run.out: required (set in config or pass --out)");
  fs::create_directories(out);
  return out;
}

void write_manifest(const fs::path& out_dir, const std::string& command, const Config& cfg,
                    const std::vector<std::string>& artifacts, const std::string& status) {
  ordered_json j;
  j["command"] = command;
  j["mode"] = cfg.get("run.mode");
  j["seed"] = cfg.get_u64("run.seed");
  j["config_hash"] = cfg.hash_hex();
  j["status"] = status;
  ordered_json arts = ordered_json::array();
  for (const std::string& a : artifacts) arts.push_back(a);
  j["artifacts"] = arts;
  j["config"] = cfg.canonical_text();
  std::ofstream out(out_dir / "manifest.json", std::ios::trunc);
  require(out.good(), ErrorKind::io, "cannot write manifest");
  out << j.dump(2) << "\n";
}

std::string manifest_config_hash(const fs::path& out_dir) {
  std::ifstream in(out_dir / "manifest.json");
  require(in.good(), ErrorKind::usage,
          "resume: no manifest.json in " + out_dir.string() + " (nothing to resume)");
  ordered_json j = ordered_json::parse(in);
  return j.at("config_hash").get<std::string>();
}

NetworkSpec arch_for_role(const Config& cfg, Role role, const std::vector<std::size_t>& input_shape,
                          std::size_t classes) {
  std::string arch;
  switch (role) {
    case Role::student: arch = cfg.get("model.student"); break;
    case Role::clean_teacher: arch = cfg.get("model.clean_teacher"); break;
    case Role::robust_teacher: arch = cfg.get("model.robust_teacher"); break;
  }
  if (arch.empty()) arch = cfg.get("model.arch");
  return parse_arch(arch, input_shape, classes);
}

TrainHooks progress_hooks(const fs::path& out_dir, const TrainConfig& tc, int checkpoint_every) {
  TrainHooks hooks;
  hooks.on_epoch = [out_dir, tc, checkpoint_every](const TrainerState& state,
                                                   const MetricRecord& rec) {
    write_metrics_jsonl(state.history, (out_dir / "metrics.jsonl").string());
    save_trainer_state(state, (out_dir / "state.bin").string());
    if (checkpoint_every > 0 && (rec.epoch + 1) % checkpoint_every == 0) {
      NetworkParams snap = state.params;
      save_checkpoint(snap, (out_dir / ("epoch-" + std::to_string(rec.epoch) + ".mtrd")).string(),
                      tc.precision);
    }
    std::printf("epoch %3d/%d  clean %.4f  robust[%s] %.4f  w_robust %.4f", rec.epoch, tc.epochs,
                rec.clean_acc, rec.selection_attack.c_str(),
                rec.robust_acc.count(rec.selection_attack) ? rec.robust_acc.at(rec.selection_attack)
                                                           : 0.0,
                rec.w_robust);
    if (!std::isnan(rec.snapshot.tau_nat))
      std::printf("  tau %.3f/%.3f  w %.4f/%.4f", rec.snapshot.tau_nat, rec.snapshot.tau_adv,
                  rec.snapshot.w_nat, rec.snapshot.w_adv);
    std::printf("\n");
    std::fflush(stdout);
  };
  return hooks;
}

TrainerState* maybe_resume(const CommonOpts& opts, const Config& cfg, const fs::path& out_dir,
                           const NetworkSpec& spec, TrainerState& storage) {
  if (!opts.resume) return nullptr;
  require(manifest_config_hash(out_dir) == cfg.hash_hex(), ErrorKind::config,
          "resume: config differs from the run being resumed");
  storage = load_trainer_state((out_dir / "state.bin").string(), spec);
  std::printf("resuming at epoch %d\n", storage.next_epoch);
  return &storage;
}

int cmd_pretrain(const CommonOpts& opts) {
  Config cfg = load_effective_config(opts);
  std::string mode = cfg.get("run.mode");
  require(mode == "natural" || mode == "sat", ErrorKind::usage,
          "pretrain: run.mode must be natural or sat (got '" + mode + "')");

  auto [train, test] = build_datasets(cfg, cfg.get_u64("run.seed"),
                                      static_cast<std::size_t>(cfg.get_int("data.subset")));
  NetworkSpec spec = parse_arch(cfg.get("model.arch"), train.feature_shape, train.classes);
  TrainConfig tc = build_train_config(cfg);
  if (opts.stop_after >= 0) tc.stop_after_epoch = static_cast<int>(opts.stop_after);

  fs::path out_dir = require_out_dir(cfg);
  std::vector<std::string> artifacts = {"checkpoint.mtrd", "best.mtrd", "metrics.jsonl",
                                        "state.bin", "manifest.json"};
  write_manifest(out_dir, "pretrain", cfg, artifacts, "running");

  TrainerState storage;
  TrainerState* resume = maybe_resume(opts, cfg, out_dir, spec, storage);
  TrainHooks hooks =
      progress_hooks(out_dir, tc, static_cast<int>(cfg.get_int("optimizer.checkpoint_every")));

  TrainResult result = mode == "natural" ? train_natural(spec, train, test, tc, hooks, resume)
                                         : train_sat(spec, train, test, tc, hooks, resume);

  Role role = mode == "natural" ? Role::clean_teacher : Role::robust_teacher;
  result.params.role = role;
  result.best_params.role = role;
  save_checkpoint(result.params, (out_dir / "checkpoint.mtrd").string(), tc.precision);
  save_checkpoint(result.best_params, (out_dir / "best.mtrd").string(), tc.precision);
  write_metrics_jsonl(result.history, (out_dir / "metrics.jsonl").string());
  write_manifest(out_dir, "pretrain", cfg, artifacts,
                 result.stopped_early ? "stopped" : "complete");
  if (!result.history.empty())
    std::printf("best epoch %d (w_robust %.4f)\n", result.best_epoch,
                result.history.empty() ? 0.0 : result.history[result.best_epoch].w_robust);
  return 0;
}

int cmd_distill(const CommonOpts& opts) {
  Config cfg = load_effective_config(opts);
  std::string mode = cfg.get("run.mode");
  TrainMode tm = train_mode_from(mode);
  require(tm == TrainMode::mtard || tm == TrainMode::mtard_no_ebb || tm == TrainMode::mtard_no_nlb ||
              tm == TrainMode::baseline_fixed,
          ErrorKind::usage, "distill: run.mode must be a distillation mode (got '" + mode + "')");

  auto [train, test] = build_datasets(cfg, cfg.get_u64("run.seed"),
                                      static_cast<std::size_t>(cfg.get_int("data.subset")));
  NetworkSpec student_spec = arch_for_role(cfg, Role::student, train.feature_shape, train.classes);
  NetworkSpec clean_spec =
      arch_for_role(cfg, Role::clean_teacher, train.feature_shape, train.classes);
  NetworkSpec robust_spec =
      arch_for_role(cfg, Role::robust_teacher, train.feature_shape, train.classes);

  std::string clean_path = cfg.get("distill.clean_teacher");
  std::string robust_path = cfg.get("distill.robust_teacher");
  require(!clean_path.empty(), ErrorKind::config, "distill.clean_teacher: required");
  require(!robust_path.empty(), ErrorKind::config, "distill.robust_teacher: required");
  clean_path = resolve_data_path(clean_path);
  robust_path = resolve_data_path(robust_path);

  NetworkParams clean_teacher = load_checkpoint(clean_path, clean_spec);
  NetworkParams robust_teacher = load_checkpoint(robust_path, robust_spec);
  require(clean_teacher.role == Role::clean_teacher, ErrorKind::role_mismatch,
          "distill.clean_teacher: checkpoint role is '" + role_name(clean_teacher.role) +
              "', expected 'clean-teacher'");
  require(robust_teacher.role == Role::robust_teacher, ErrorKind::role_mismatch,
          "distill.robust_teacher: checkpoint role is '" + role_name(robust_teacher.role) +
              "', expected 'robust-teacher'");

  TrainConfig tc = build_train_config(cfg);
  if (opts.stop_after >= 0) tc.stop_after_epoch = static_cast<int>(opts.stop_after);

  fs::path out_dir = require_out_dir(cfg);
  std::vector<std::string> artifacts = {"checkpoint.mtrd", "best.mtrd", "metrics.jsonl",
                                        "state.bin", "manifest.json"};
  write_manifest(out_dir, "distill", cfg, artifacts, "running");

  TrainerState storage;
  TrainerState* resume = maybe_resume(opts, cfg, out_dir, student_spec, storage);
  TrainHooks hooks =
      progress_hooks(out_dir, tc, static_cast<int>(cfg.get_int("optimizer.checkpoint_every")));

  TrainResult result = distill_mtard(student_spec, clean_spec, clean_teacher, robust_spec,
                                     robust_teacher, train, test, tc, hooks, resume);

  save_checkpoint(result.params, (out_dir / "checkpoint.mtrd").string(), tc.precision);
  save_checkpoint(result.best_params, (out_dir / "best.mtrd").string(), tc.precision);
  write_metrics_jsonl(result.history, (out_dir / "metrics.jsonl").string());
  write_manifest(out_dir, "distill", cfg, artifacts,
                 result.stopped_early ? "stopped" : "complete");
  if (!result.history.empty())
    std::printf("best epoch %d (w_robust %.4f)\n", result.best_epoch,
                result.history[result.best_epoch].w_robust);
  return 0;
}

int cmd_eval(const CommonOpts& opts, const std::string& checkpoint_path) {
  Config cfg = load_effective_config(opts);
  require(fs::exists(checkpoint_path), ErrorKind::usage,
          "eval: checkpoint not found: " + checkpoint_path);

  auto [train, test] = build_datasets(cfg, cfg.get_u64("run.seed"),
                                      static_cast<std::size_t>(cfg.get_int("data.subset")));
  (void)train;
  CheckpointInfo info = peek_checkpoint(checkpoint_path);
  NetworkSpec spec = arch_for_role(cfg, info.role, test.feature_shape, test.classes);
  NetworkParams params = load_checkpoint(checkpoint_path, spec);

  MetricRecord rec;
  rec.epoch = 0;
  rec.clean_acc = accuracy(spec, params, test);
  std::uint64_t seed = cfg.get_u64("run.seed");
  for (const auto& [name, attack] : build_eval_attacks(cfg)) {
    std::uint64_t attack_seed =
        Rng::derive_key(seed, rng_tag::eval, fnv1a64(name.data(), name.size()));
    rec.robust_acc[name] = robust_accuracy(spec, params, test, attack, attack_seed);
  }
  rec.selection_attack = cfg.get("eval.selection");
  rec.pi_nat = cfg.get_real("eval.pi_nat");
  rec.pi_adv = cfg.get_real("eval.pi_adv");
  rec.w_robust =
      w_robust(rec.clean_acc, rec.robust_acc.at(rec.selection_attack), rec.pi_nat, rec.pi_adv);

  std::string json = metric_record_to_json(rec);
  std::string csv = metrics_to_csv({rec});
  std::printf("%s\n%s", json.c_str(), csv.c_str());

  if (!cfg.get("run.out").empty()) {
    fs::path out_dir = require_out_dir(cfg);
    std::ofstream(out_dir / "record.json", std::ios::trunc) << json << "\n";
    std::ofstream(out_dir / "record.csv", std::ios::trunc) << csv;
    write_manifest(out_dir, "eval", cfg, {"record.json", "record.csv", "manifest.json"},
                   "complete");
  }
  return 0;
}

int cmd_report(const std::vector<std::string>& metrics_paths, const std::string& out) {
  require(!metrics_paths.empty(), ErrorKind::usage, "report: need at least one metrics file");
  require(!out.empty(), ErrorKind::usage, "report: --out is required");
  std::vector<std::pair<std::string, std::vector<MetricRecord>>> runs;
  for (const std::string& path : metrics_paths) {
    require(fs::exists(path), ErrorKind::usage, "report: metrics file not found: " + path);
    std::string label = fs::path(path).parent_path().filename().string();
    if (label.empty()) label = fs::path(path).stem().string();
    // Disambiguate identical labels by suffixing.
    std::string base = label;
    int k = 2;
    auto taken = [&](const std::string& l) {
      for (auto& [existing, _] : runs)
        if (existing == l) return true;
      return false;
    };
    while (taken(label)) label = base + "-" + std::to_string(k++);
    runs.emplace_back(label, read_metrics_jsonl(path));
  }
  std::vector<std::string> written = write_report(runs, out);
  ordered_json j;
  j["command"] = "report";
  ordered_json arts = ordered_json::array();
  for (const std::string& a : written) arts.push_back(a);
  j["artifacts"] = arts;
  std::ofstream(fs::path(out) / "manifest.json", std::ios::trunc) << j.dump(2) << "\n";
  for (const std::string& f : written) std::printf("wrote %s\n", (fs::path(out) / f).c_str());
  return 0;
}

int exit_code_for(const Error& e) {
  switch (e.kind()) {
    case ErrorKind::usage:
    case ErrorKind::config:
    case ErrorKind::parse:
    case ErrorKind::io:
    case ErrorKind::fingerprint_mismatch:
    case ErrorKind::version_mismatch:
    case ErrorKind::role_mismatch:
      return 2;
    default:
      return 1;
  }
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"Adversarial robustness distillation lab: two-teacher training with "
               "entropy-balanced temperatures and normalized loss weights"};
  app.require_subcommand(1);

  CommonOpts opts;
  std::string checkpoint_path;
  std::vector<std::string> metrics_paths;
  std::string report_out;

  auto add_common = [&](CLI::App* sub, bool with_train_flags) {
    sub->add_option("--config", opts.config_path, "configuration file");
    sub->add_option("--seed", opts.seed, "override run.seed");
    sub->add_option("--out", opts.out, "override run.out");
    sub->add_option("--subset", opts.subset, "cap loaded dataset records");
    if (with_train_flags) {
      sub->add_option("--mode", opts.mode, "override run.mode");
      sub->add_option("--stop-after-epoch", opts.stop_after,
                      "halt after this epoch (state stays resumable)");
      sub->add_flag("--resume", opts.resume, "continue from state.bin in the output directory");
    }
  };

  CLI::App* pretrain = app.add_subcommand("pretrain", "train a clean (natural) or robust (sat) teacher");
  add_common(pretrain, true);
  CLI::App* distill = app.add_subcommand("distill", "distill a student from two teachers");
  add_common(distill, true);
  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint under the configured attacks");
  add_common(eval, false);
  eval->add_option("--checkpoint", checkpoint_path, "checkpoint to evaluate")->required();
  CLI::App* report = app.add_subcommand("report", "render CSV tables and SVG curves from metrics");
  report->add_option("--metrics", metrics_paths, "metrics JSONL file(s)")
      ->required()
      ->delimiter(',');
  report->add_option("--out", report_out, "output directory")->required();

  std::vector<std::string> argv_rev(args.rbegin(), args.rend());
  try {
    app.parse(argv_rev);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (pretrain->parsed()) return cmd_pretrain(opts);
    if (distill->parsed()) return cmd_distill(opts);
    if (eval->parsed()) return cmd_eval(opts, checkpoint_path);
    return cmd_report(metrics_paths, report_out);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}

}  // namespace mtard::cli
