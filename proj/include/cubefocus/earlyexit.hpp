#pragma once

// Entropy-based early termination and budget-constrained threshold solving.
//
// A sample exits at the first step t whose score is at or below eta_t; the
// final step always exits. For the entropy criterion the score is the
// prediction entropy; for the confidence criterion it is -max_j p_j, so
// "exit when max_j p_j >= theta" becomes "score <= -theta".

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "cubefocus/costmodel.hpp"

namespace cubefocus {

// Shannon entropy in nats; 0 log 0 = 0. Rejects inputs whose sum is off by
// more than 1e-6 or that contain negative entries.
double entropy(std::span<const double> p);

struct StepRecord {
  double entropy = 0.0;
  bool correct = false;
  Madds cumulative_madds = 0;
  double confidence = 0.0;  // max_j p_j
};

struct ExitRecord {
  std::size_t sample_id = 0;
  std::vector<StepRecord> steps;  // t = 0..K
};

using ExitRecords = std::vector<ExitRecord>;

// Number of cubes K shared by every record. Throws std::invalid_argument on
// empty or ragged records, negative entropy, or non-increasing cost.
std::size_t records_max_cubes(const ExitRecords& records);

// CSV: sample_id,t,entropy,correct,cumulative_madds,confidence
void write_records_csv(std::ostream& out, const ExitRecords& records);
ExitRecords read_records_csv(std::istream& in);

enum class ExitCriterion { entropy, confidence };

struct ThresholdSchedule {
  ExitCriterion criterion = ExitCriterion::entropy;
  std::vector<double> eta;  // t = 0..K-1, compared against the criterion's score
  double budget = 0.0;
};

// CSV: "budget,<B>" line, then "t,eta" header and one row per threshold.
void write_schedule_csv(std::ostream& out, const ThresholdSchedule& schedule);
ThresholdSchedule read_schedule_csv(std::istream& in);

struct ExitOutcome {
  double accuracy = 0.0;   // fraction in [0, 1]
  double mean_cost = 0.0;  // mult-adds per sample
  std::vector<std::size_t> histogram;  // exits per t, size K + 1
  std::vector<std::size_t> exit_step;  // per sample
};

double exit_score(const StepRecord& step, ExitCriterion criterion);

ExitOutcome simulate(const ExitRecords& records, const ThresholdSchedule& schedule);
// Aggregates an explicit per-sample exit assignment.
ExitOutcome outcome_for_exits(const ExitRecords& records, std::span<const std::size_t> exit_step);
// Mean cost of running a fixed number of steps on every sample, t = 0..K.
std::vector<double> mean_step_costs(const ExitRecords& records);

// Exit proportions proportional to q^t, scanned over q; thresholds are the
// per-stage score quantiles among samples still running. Returns the most
// accurate schedule whose realized mean cost on `records` is <= budget (ties:
// lower cost, then smaller q). Throws std::invalid_argument when budget is
// below the glance cost.
ThresholdSchedule solve_thresholds(const ExitRecords& records, double budget,
                                   ExitCriterion criterion = ExitCriterion::entropy);

struct BaselineRow {
  std::string policy;  // entropy, confidence, random, fixed
  double budget = 0.0;
  double realized_cost = 0.0;
  double accuracy = 0.0;
  double accuracy_stderr = 0.0;
  std::vector<std::size_t> histogram;
};

// Four rows at one matched budget: solved entropy and confidence schedules,
// random exits reusing the entropy schedule's exit counts (averaged over
// `random_seeds` shuffles, with standard error), and the deepest fixed exit
// that fits the budget.
std::vector<BaselineRow> baseline_policies(const ExitRecords& records, double budget, std::uint64_t seed,
                                           std::size_t random_seeds = 100);

// CSV: policy,budget,realized_cost,accuracy,accuracy_stderr,exit_histogram
// (histogram counts joined with ';').
void write_frontier_csv(std::ostream& out, const std::vector<BaselineRow>& rows);

}  // namespace cubefocus
