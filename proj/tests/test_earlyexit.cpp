#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "doctest.h"
#include "cubefocus/earlyexit.hpp"
#include "cubefocus/rng.hpp"

using namespace cubefocus;

namespace {

constexpr double inf = std::numeric_limits<double>::infinity();

ExitRecords hand_records() {
  auto rec = [](std::size_t id, std::vector<double> e, std::vector<bool> ok) {
    ExitRecord r{id, {}};
    for (std::size_t t = 0; t < e.size(); ++t) r.steps.push_back({e[t], ok[t], 10 * (t + 1), 0.0});
    return r;
  };
  return {rec(0, {0.1, 0.3, 0.2}, {true, false, false}), rec(1, {0.9, 0.2, 0.1}, {false, true, true}),
          rec(2, {0.9, 0.8, 0.5}, {false, false, true})};
}

// Synthetic records where later steps are more accurate and entropy is
// informative about correctness.
ExitRecords random_records(std::size_t n, std::size_t k, std::uint64_t seed) {
  Rng rng(seed);
  ExitRecords out;
  for (std::size_t i = 0; i < n; ++i) {
    ExitRecord r{i, {}};
    const double difficulty = uniform01(rng);
    for (std::size_t t = 0; t <= k; ++t) {
      const double skill = 0.3 + 0.6 * static_cast<double>(t) / static_cast<double>(k);
      const bool correct = uniform01(rng) < skill * (1.2 - difficulty);
      const double e = std::max(0.0, (correct ? 0.6 : 1.4) * difficulty + 0.3 * uniform01(rng));
      const Madds cost = 1000 + 3000 * t + static_cast<Madds>(500 * uniform01(rng)) * (t > 0);
      r.steps.push_back({e, correct, cost, std::exp(-e)});
    }
    out.push_back(r);
  }
  return out;
}

// Exhaustive K = 1 search over how many of the lowest-entropy samples exit at t = 0.
double best_one_stage(const ExitRecords& r, double budget) {
  std::vector<std::size_t> order(r.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return r[a].steps[0].entropy < r[b].steps[0].entropy; });
  double best = -1.0;
  for (std::size_t m = 0; m <= r.size(); ++m) {
    double correct = 0.0, cost = 0.0;
    for (std::size_t j = 0; j < order.size(); ++j) {
      const auto& s = r[order[j]].steps[j < m ? 0 : 1];
      correct += s.correct;
      cost += static_cast<double>(s.cumulative_madds);
    }
    if (cost / static_cast<double>(r.size()) <= budget) best = std::max(best, correct / static_cast<double>(r.size()));
  }
  return best;
}

}  // namespace

TEST_CASE("entropy examples") {
  const double one_hot[] = {0.0, 1.0, 0.0};
  CHECK(entropy(one_hot) == 0.0);
  std::vector<double> uniform(10, 0.1);
  CHECK(entropy(uniform) == doctest::Approx(std::log(10.0)).epsilon(1e-12));
  const double p[] = {0.5, 0.25, 0.25};
  CHECK(entropy(p) == doctest::Approx(1.5 * std::log(2.0)).epsilon(1e-12));
  const double bad[] = {0.5, 0.4};
  CHECK_THROWS_AS(entropy(bad), std::invalid_argument);
  const double neg[] = {1.1, -0.1};
  CHECK_THROWS_AS(entropy(neg), std::invalid_argument);
}

TEST_CASE("simulate: degenerate and hand-built schedules") {
  const ExitRecords r = hand_records();
  ExitOutcome all0 = simulate(r, {ExitCriterion::entropy, {inf, inf}, 0});
  CHECK(all0.histogram == std::vector<std::size_t>{3, 0, 0});
  CHECK(all0.mean_cost == 10.0);
  ExitOutcome never = simulate(r, {ExitCriterion::entropy, {-1.0, -1.0}, 0});
  CHECK(never.histogram == std::vector<std::size_t>{0, 0, 3});
  ExitOutcome hand = simulate(r, {ExitCriterion::entropy, {0.5, 0.5}, 0});
  CHECK(hand.exit_step == std::vector<std::size_t>{0, 1, 2});
  CHECK(hand.accuracy == 1.0);
  CHECK(hand.mean_cost == 20.0);
  // Ties terminate.
  ExitOutcome tie = simulate(r, {ExitCriterion::entropy, {0.1, -1.0}, 0});
  CHECK(tie.exit_step[0] == 0);
}

TEST_CASE("raising a threshold never delays an exit") {
  const ExitRecords r = random_records(150, 2, 1);
  Rng rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    ThresholdSchedule s{ExitCriterion::entropy, {2.0 * uniform01(rng), 2.0 * uniform01(rng)}, 0};
    ThresholdSchedule raised = s;
    raised.eta[trial % 2] += uniform01(rng);
    const auto a = simulate(r, s), b = simulate(r, raised);
    for (std::size_t i = 0; i < r.size(); ++i) CHECK(b.exit_step[i] <= a.exit_step[i]);
  }
}

TEST_CASE("solver extremes and budget hardness") {
  const ExitRecords r = random_records(200, 2, 3);
  const auto costs = mean_step_costs(r);
  const ThresholdSchedule full = solve_thresholds(r, costs.back() + 1.0);
  std::vector<std::size_t> last(r.size(), 2);
  CHECK(simulate(r, full).accuracy >= outcome_for_exits(r, last).accuracy);
  const ThresholdSchedule glance_only = solve_thresholds(r, costs[0]);
  CHECK(simulate(r, glance_only).histogram[0] == r.size());
  CHECK_THROWS_AS(solve_thresholds(r, costs[0] - 1.0), std::invalid_argument);
  for (double frac = 0.0; frac <= 1.0; frac += 0.05) {
    const double b = costs[0] + frac * (costs.back() - costs[0]);
    for (ExitCriterion c : {ExitCriterion::entropy, ExitCriterion::confidence}) {
      const ThresholdSchedule s = solve_thresholds(r, b, c);
      CHECK(simulate(r, s).mean_cost <= b);
      CHECK(s.budget == b);
      CHECK(solve_thresholds(r, b, c).eta == s.eta);
    }
  }
}

TEST_CASE("single-stage solver equals a direct quantile search") {
  const ExitRecords r = random_records(120, 1, 4);
  const auto costs = mean_step_costs(r);
  for (double frac : {0.0, 0.1, 0.3, 0.5, 0.7, 0.9, 1.0}) {
    const double b = costs[0] + frac * (costs[1] - costs[0]);
    CHECK(simulate(r, solve_thresholds(r, b)).accuracy == doctest::Approx(best_one_stage(r, b)).epsilon(1e-12));
  }
}

TEST_CASE("records and schedule CSV round trips") {
  ExitRecords r = random_records(5, 2, 5);
  std::ostringstream out;
  write_records_csv(out, r);
  CHECK(out.str().rfind("sample_id,t,entropy,correct,cumulative_madds,confidence\n", 0) == 0);
  std::istringstream in(out.str());
  const ExitRecords back = read_records_csv(in);
  REQUIRE(back.size() == r.size());
  for (std::size_t i = 0; i < r.size(); ++i)
    for (std::size_t t = 0; t < 3; ++t) {
      CHECK(back[i].steps[t].entropy == r[i].steps[t].entropy);
      CHECK(back[i].steps[t].cumulative_madds == r[i].steps[t].cumulative_madds);
      CHECK(back[i].steps[t].correct == r[i].steps[t].correct);
    }

  const ThresholdSchedule s{ExitCriterion::entropy, {0.125, -inf}, 12345.5};
  std::ostringstream sout;
  write_schedule_csv(sout, s);
  std::istringstream sin(sout.str());
  const ThresholdSchedule sb = read_schedule_csv(sin);
  CHECK(sb.budget == s.budget);
  CHECK(sb.eta == s.eta);
}

TEST_CASE("records validation") {
  ExitRecords r = hand_records();
  CHECK(records_max_cubes(r) == 2);
  r[1].steps.pop_back();
  CHECK_THROWS_AS(records_max_cubes(r), std::invalid_argument);
  r = hand_records();
  r[0].steps[2].cumulative_madds = 20;
  CHECK_THROWS_AS(records_max_cubes(r), std::invalid_argument);
}

TEST_CASE("baseline rows") {
  const ExitRecords r = random_records(200, 2, 6);
  const auto costs = mean_step_costs(r);
  const double budget = 0.5 * (costs[0] + costs.back());
  const auto rows = baseline_policies(r, budget, 11);
  REQUIRE(rows.size() == 4);
  CHECK(rows[0].policy == "entropy");
  CHECK(rows[1].policy == "confidence");
  CHECK(rows[2].policy == "random");
  CHECK(rows[3].policy == "fixed");
  CHECK(rows[2].accuracy_stderr > 0.0);
  CHECK(rows[2].histogram == rows[0].histogram);
  for (const auto& row : rows)
    if (row.policy != "random") CHECK(row.realized_cost <= budget);
  const auto full = baseline_policies(r, costs.back(), 11);
  std::vector<std::size_t> last(r.size(), 2);
  CHECK(full[3].accuracy == outcome_for_exits(r, last).accuracy);
  std::ostringstream csv;
  write_frontier_csv(csv, rows);
  CHECK(csv.str().rfind("policy,budget,realized_cost,accuracy,accuracy_stderr,exit_histogram\n", 0) == 0);
}
