// cubefocus command-line tool.
// Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cubefocus/harness.hpp"

using namespace cubefocus;

namespace {

void apply_overrides(Config& cfg, const std::vector<std::string>& sets) {
  for (const auto& kv : sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
}

std::optional<std::uint64_t> seed_flag(const CLI::Option* opt, std::uint64_t value) {
  return opt->count() ? std::optional<std::uint64_t>(value) : std::nullopt;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Glance-and-focus video recognition with budgeted early exit"};
  app.require_subcommand(1);

  std::string config_path, data_dir, out_path, checkpoint, split = "test", policy, records, criterion = "entropy";
  std::string mode, schedule;
  std::vector<std::string> sets;
  std::vector<double> budgets;
  double budget = 0.0;
  std::uint64_t seed = 0;

  auto* gen = app.add_subcommand("generate", "Generate the synthetic dataset");
  gen->add_option("--config", config_path, "Config file")->required()->check(CLI::ExistingFile);
  gen->add_option("--out", out_path, "Dataset directory")->required();
  auto* gen_seed = gen->add_option("--seed", seed, "Seed (overrides config and CUBEFOCUS_SEED)");
  gen->add_option("--set", sets, "Config override key=value");

  auto* tr = app.add_subcommand("train", "Train a model");
  tr->add_option("--config", config_path, "Config file")->required()->check(CLI::ExistingFile);
  tr->add_option("--data", data_dir, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  tr->add_option("--out", out_path, "Output directory")->required();
  tr->add_option("--init", checkpoint, "Start from this checkpoint")->check(CLI::ExistingFile);
  tr->add_option("--mode", mode, "pixelgrad | featuregrad");
  tr->add_option("--schedule", schedule, "end_to_end | two_stage");
  auto* tr_seed = tr->add_option("--seed", seed, "Seed (overrides config and CUBEFOCUS_SEED)");
  tr->add_option("--set", sets, "Config override key=value");

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint and export exit records");
  ev->add_option("--checkpoint", checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
  ev->add_option("--data", data_dir, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  ev->add_option("--split", split, "train | val | test");
  ev->add_option("--policy", policy, "learned | random | random_spatial | random_temporal");
  ev->add_option("--out", out_path, "Output directory")->required();
  auto* ev_seed = ev->add_option("--seed", seed, "Seed for random policies");

  auto* solve = app.add_subcommand("solve-thresholds", "Solve exit thresholds for a budget");
  solve->add_option("--records", records, "Records CSV")->required()->check(CLI::ExistingFile);
  solve->add_option("--budget", budget, "Mean mult-adds per video")->required();
  solve->add_option("--criterion", criterion, "entropy | confidence");
  solve->add_option("--out", out_path, "Schedule CSV")->required();

  auto* sweep = app.add_subcommand("sweep", "Budget sweep over exit policies");
  sweep->add_option("--records", records, "Records CSV")->required()->check(CLI::ExistingFile);
  sweep->add_option("--budgets", budgets, "Budgets (mult-adds)")->required()->delimiter(',');
  sweep->add_option("--out", out_path, "Frontier CSV")->required();
  auto* sw_seed = sweep->add_option("--seed", seed, "Seed for random exits");

  auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of every differentiable op");
  auto* gc_seed = gc->add_option("--seed", seed, "Seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*gen) {
      Config cfg = Config::load(config_path);
      apply_overrides(cfg, sets);
      const auto s = resolve_seed(cfg, seed_flag(gen_seed, seed));
      cmd_generate(cfg, s, out_path);
      std::cerr << "dataset written to " << out_path << " (seed " << s << ")\n";
    } else if (*tr) {
      Config cfg = Config::load(config_path);
      apply_overrides(cfg, sets);
      if (!mode.empty()) cfg.set("mode", mode);
      if (!schedule.empty()) cfg.set("schedule", schedule);
      const auto s = resolve_seed(cfg, seed_flag(tr_seed, seed));
      const TrainOutputs out = cmd_train(data_dir, cfg, s, out_path, checkpoint);
      for (const auto& e : out.curve_rows) {
        std::cerr << "epoch " << e.epoch << " [" << e.phase << "] loss " << e.train_loss << " val acc "
                  << e.val_accuracy << '\n';
      }
      std::cerr << "checkpoint: " << out.checkpoint.string() << '\n';
    } else if (*ev) {
      const Model::Loaded loaded = Model::load(checkpoint);
      const PolicyKind p =
          policy_kind_from_string(policy.empty() ? loaded.config.get_string("policy") : policy);
      const auto s = resolve_seed(loaded.config, seed_flag(ev_seed, seed));
      const EvalOutputs out = cmd_eval(checkpoint, data_dir, split, p, s, out_path);
      for (std::size_t t = 0; t < out.accuracy_per_step.size(); ++t) {
        std::cerr << "t=" << t << " accuracy " << out.accuracy_per_step[t] << '\n';
      }
      std::cerr << "mean policy IoU " << out.mean_policy_iou << '\n';
    } else if (*solve) {
      if (criterion != "entropy" && criterion != "confidence") {
        throw ConfigError("unknown criterion '" + criterion + "' (entropy|confidence)");
      }
      const ThresholdSchedule sched = cmd_solve_thresholds(
          records, budget, criterion == "entropy" ? ExitCriterion::entropy : ExitCriterion::confidence, out_path);
      std::cerr << "schedule with " << sched.eta.size() << " thresholds written to " << out_path << '\n';
    } else if (*sweep) {
      const auto s = resolve_seed(Config{}, seed_flag(sw_seed, seed));
      const auto rows = cmd_sweep(records, budgets, s, out_path);
      std::cerr << rows.size() << " frontier rows written to " << out_path << '\n';
    } else if (*gc) {
      const auto s = resolve_seed(Config{}, seed_flag(gc_seed, seed));
      double worst = 0.0;
      for (const auto& row : cmd_gradcheck(s)) {
        std::printf("%-28s max_rel_error %.3e  (%zu probes)\n", row.op.c_str(), row.max_rel_error, row.probes);
        worst = std::max(worst, row.max_rel_error);
      }
      std::printf("worst %.3e\n", worst);
      return worst < 1e-4 ? 0 : 2;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid argument: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
