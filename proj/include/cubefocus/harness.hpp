#pragma once

// Command implementations behind the CLI. Each writes its artifacts plus a
// <command>_manifest.json into the output directory. Data go to files;
// nothing is printed except by cmd_gradcheck's caller.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cubefocus/config.hpp"
#include "cubefocus/earlyexit.hpp"
#include "cubefocus/train.hpp"

namespace cubefocus {

namespace fs = std::filesystem;

struct RunManifest {
  std::string command;
  Config config;
  std::uint64_t seed = 0;
  fs::path checkpoint;
  std::vector<fs::path> outputs;
  std::string started;
  std::string finished;

  void write(const fs::path& path) const;
};

// Writes <out>/manifest.csv and one directory per split.
void cmd_generate(const Config& cfg, std::uint64_t seed, const fs::path& out_dir);

struct TrainOutputs {
  fs::path checkpoint;
  fs::path curve;
  fs::path ledger;
  std::vector<EpochStats> curve_rows;
};

// Trains on <dataset>/train, validating on <dataset>/val each epoch. Writes
// model.ckpt, training_curve.csv and cost_ledger.csv. A non-empty `init`
// checkpoint replaces the random initialisation; its architecture must match.
TrainOutputs cmd_train(const fs::path& dataset, const Config& cfg, std::uint64_t seed, const fs::path& out_dir,
                       const fs::path& init = {});

struct EvalOutputs {
  fs::path records;
  fs::path accuracy;
  fs::path summary;
  std::vector<double> accuracy_per_step;
  double mean_policy_iou = 0.0;
};

// Writes records.csv, accuracy.csv (t,accuracy) and eval_summary.csv.
EvalOutputs cmd_eval(const fs::path& checkpoint, const fs::path& dataset, const std::string& split,
                     PolicyKind policy, std::uint64_t seed, const fs::path& out_dir);

ThresholdSchedule cmd_solve_thresholds(const fs::path& records, double budget, ExitCriterion criterion,
                                       const fs::path& schedule_out);

// One row per (budget, policy); frontier CSV at `frontier_out`.
std::vector<BaselineRow> cmd_sweep(const fs::path& records, const std::vector<double>& budgets,
                                   std::uint64_t seed, const fs::path& frontier_out);

struct GradcheckRow {
  std::string op;
  double max_rel_error = 0.0;
  std::size_t probes = 0;
};

// Finite-difference check of every differentiable op and of the full
// training loss in both gradient modes.
std::vector<GradcheckRow> cmd_gradcheck(std::uint64_t seed);

}  // namespace cubefocus
