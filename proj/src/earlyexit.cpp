#include "cubefocus/earlyexit.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "cubefocus/rng.hpp"

namespace cubefocus {

namespace {

constexpr double kNever = -std::numeric_limits<double>::infinity();

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
  return cells;
}

std::string trimmed_line(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

}  // namespace

double entropy(std::span<const double> p) {
  double total = 0.0;
  for (double v : p) {
    if (!(v >= 0.0)) throw std::invalid_argument("probability vector has a negative or NaN entry");
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-6) {
    throw std::invalid_argument("probability vector sums to " + std::to_string(total));
  }
  double h = 0.0;
  for (double v : p)
    if (v > 0.0) h -= v * std::log(v);
  return h;
}

std::size_t records_max_cubes(const ExitRecords& records) {
  if (records.empty()) throw std::invalid_argument("no exit records");
  const std::size_t steps = records.front().steps.size();
  if (steps == 0) throw std::invalid_argument("exit record without steps");
  for (const auto& r : records) {
    if (r.steps.size() != steps) {
      throw std::invalid_argument("sample " + std::to_string(r.sample_id) + " has " +
                                  std::to_string(r.steps.size()) + " steps, expected " + std::to_string(steps));
    }
    for (std::size_t t = 0; t < steps; ++t) {
      if (!(r.steps[t].entropy >= 0.0)) throw std::invalid_argument("negative entropy in records");
      if (t > 0 && r.steps[t].cumulative_madds <= r.steps[t - 1].cumulative_madds) {
        throw std::invalid_argument("cost not strictly increasing for sample " + std::to_string(r.sample_id));
      }
    }
  }
  return steps - 1;
}

void write_records_csv(std::ostream& out, const ExitRecords& records) {
  out << "sample_id,t,entropy,correct,cumulative_madds,confidence\n" << std::setprecision(17);
  for (const auto& r : records)
    for (std::size_t t = 0; t < r.steps.size(); ++t) {
      const auto& s = r.steps[t];
      out << r.sample_id << ',' << t << ',' << s.entropy << ',' << (s.correct ? 1 : 0) << ','
          << s.cumulative_madds << ',' << s.confidence << '\n';
    }
}

ExitRecords read_records_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty records file");
  const auto header = split_csv(trimmed_line(line));
  if (header.size() < 5 || header[0] != "sample_id" || header[1] != "t") {
    throw std::runtime_error("records header must start with sample_id,t,entropy,correct,cumulative_madds");
  }
  const bool has_confidence = header.size() >= 6;
  ExitRecords records;
  while (std::getline(in, line)) {
    line = trimmed_line(line);
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != header.size()) throw std::runtime_error("malformed records row: " + line);
    const std::size_t id = std::stoull(f[0]);
    const std::size_t t = std::stoull(f[1]);
    if (t == 0) records.push_back({id, {}});
    if (records.empty() || records.back().sample_id != id || records.back().steps.size() != t) {
      throw std::runtime_error("records rows must list t = 0, 1, ... per sample: " + line);
    }
    StepRecord s;
    s.entropy = std::stod(f[2]);
    s.correct = f[3] == "1";
    s.cumulative_madds = std::stoull(f[4]);
    s.confidence = has_confidence ? std::stod(f[5]) : 0.0;
    records.back().steps.push_back(s);
  }
  records_max_cubes(records);
  return records;
}

void write_schedule_csv(std::ostream& out, const ThresholdSchedule& schedule) {
  out << std::setprecision(17) << "budget," << schedule.budget << '\n';
  out << "t,eta\n";
  for (std::size_t t = 0; t < schedule.eta.size(); ++t) out << t << ',' << schedule.eta[t] << '\n';
}

ThresholdSchedule read_schedule_csv(std::istream& in) {
  ThresholdSchedule s;
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty schedule file");
  auto f = split_csv(trimmed_line(line));
  if (f.size() != 2 || f[0] != "budget") throw std::runtime_error("schedule must start with 'budget,<B>'");
  s.budget = std::stod(f[1]);
  if (!std::getline(in, line) || trimmed_line(line) != "t,eta") {
    throw std::runtime_error("schedule is missing its 't,eta' header");
  }
  while (std::getline(in, line)) {
    line = trimmed_line(line);
    if (line.empty()) continue;
    f = split_csv(line);
    if (f.size() != 2 || std::stoull(f[0]) != s.eta.size()) throw std::runtime_error("bad schedule row: " + line);
    s.eta.push_back(std::stod(f[1]));
  }
  return s;
}

double exit_score(const StepRecord& step, ExitCriterion criterion) {
  return criterion == ExitCriterion::entropy ? step.entropy : -step.confidence;
}

ExitOutcome outcome_for_exits(const ExitRecords& records, std::span<const std::size_t> exit_step) {
  const std::size_t k = records_max_cubes(records);
  if (exit_step.size() != records.size()) throw std::invalid_argument("one exit step per record required");
  ExitOutcome o;
  o.histogram.assign(k + 1, 0);
  o.exit_step.assign(exit_step.begin(), exit_step.end());
  std::size_t correct = 0;
  Madds cost = 0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const std::size_t t = exit_step[i];
    if (t > k) throw std::invalid_argument("exit step beyond K");
    ++o.histogram[t];
    correct += records[i].steps[t].correct;
    cost += records[i].steps[t].cumulative_madds;
  }
  const double n = static_cast<double>(records.size());
  o.accuracy = static_cast<double>(correct) / n;
  o.mean_cost = static_cast<double>(cost) / n;
  return o;
}

ExitOutcome simulate(const ExitRecords& records, const ThresholdSchedule& schedule) {
  const std::size_t k = records_max_cubes(records);
  if (schedule.eta.size() != k) {
    throw std::invalid_argument("schedule has " + std::to_string(schedule.eta.size()) + " thresholds, records need " +
                                std::to_string(k));
  }
  std::vector<std::size_t> exits(records.size(), k);
  for (std::size_t i = 0; i < records.size(); ++i)
    for (std::size_t t = 0; t < k; ++t)
      if (exit_score(records[i].steps[t], schedule.criterion) <= schedule.eta[t]) {
        exits[i] = t;
        break;
      }
  return outcome_for_exits(records, exits);
}

std::vector<double> mean_step_costs(const ExitRecords& records) {
  const std::size_t k = records_max_cubes(records);
  std::vector<double> out;
  for (std::size_t t = 0; t <= k; ++t) {
    Madds total = 0;
    for (const auto& r : records) total += r.steps[t].cumulative_madds;
    out.push_back(static_cast<double>(total) / static_cast<double>(records.size()));
  }
  return out;
}

namespace {

// Geometric exit proportions q^t / sum, t = 0..K. q = +inf puts everything on K.
std::vector<double> geometric_proportions(double q, std::size_t k) {
  std::vector<double> p(k + 1, 0.0);
  if (std::isinf(q)) {
    p[k] = 1.0;
    return p;
  }
  if (q == 0.0) {
    p[0] = 1.0;
    return p;
  }
  // Normalise by the largest term to avoid overflow for large q.
  const double top = q >= 1.0 ? static_cast<double>(k) : 0.0;
  double total = 0.0;
  for (std::size_t t = 0; t <= k; ++t) total += p[t] = std::pow(q, static_cast<double>(t) - top);
  for (double& v : p) v /= total;
  return p;
}

ThresholdSchedule schedule_for_proportions(const ExitRecords& records, const std::vector<double>& proportions,
                                           ExitCriterion criterion) {
  const std::size_t k = proportions.size() - 1;
  const std::size_t n = records.size();
  ThresholdSchedule s;
  s.criterion = criterion;
  std::vector<std::size_t> remaining(n);
  std::iota(remaining.begin(), remaining.end(), 0);
  double cumulative = 0.0;
  std::size_t exited = 0;
  for (std::size_t t = 0; t < k; ++t) {
    cumulative += proportions[t];
    const auto target = static_cast<std::size_t>(std::llround(cumulative * static_cast<double>(n)));
    const std::size_t want = std::min(target > exited ? target - exited : 0, remaining.size());
    if (want == 0) {
      s.eta.push_back(kNever);
      continue;
    }
    std::vector<double> scores;
    for (std::size_t i : remaining) scores.push_back(exit_score(records[i].steps[t], criterion));
    std::nth_element(scores.begin(), scores.begin() + static_cast<std::ptrdiff_t>(want - 1), scores.end());
    const double eta = scores[want - 1];
    s.eta.push_back(eta);
    std::vector<std::size_t> still;
    for (std::size_t i : remaining) {
      if (exit_score(records[i].steps[t], criterion) <= eta) {
        ++exited;
      } else {
        still.push_back(i);
      }
    }
    remaining.swap(still);
  }
  return s;
}

std::vector<double> q_grid() {
  std::vector<double> qs{0.0};
  constexpr int kSteps = 1200;
  for (int i = 0; i <= kSteps; ++i) qs.push_back(std::pow(10.0, -4.0 + 8.0 * i / kSteps));
  qs.push_back(std::numeric_limits<double>::infinity());
  return qs;
}

}  // namespace

ThresholdSchedule solve_thresholds(const ExitRecords& records, double budget, ExitCriterion criterion) {
  const std::size_t k = records_max_cubes(records);
  const double glance = mean_step_costs(records)[0];
  if (!(budget >= glance)) {
    std::ostringstream msg;
    msg << std::setprecision(17) << "budget " << budget << " is below the glance cost " << glance;
    throw std::invalid_argument(msg.str());
  }
  ThresholdSchedule best;
  ExitOutcome best_outcome;
  bool found = false;
  for (double q : q_grid()) {
    ThresholdSchedule s = schedule_for_proportions(records, geometric_proportions(q, k), criterion);
    const ExitOutcome o = simulate(records, s);
    if (!(o.mean_cost <= budget)) continue;
    const bool better = !found || o.accuracy > best_outcome.accuracy ||
                        (o.accuracy == best_outcome.accuracy && o.mean_cost < best_outcome.mean_cost);
    if (better) {
      best = std::move(s);
      best_outcome = o;
      found = true;
    }
  }
  // q = 0 exits everything at t = 0, whose mean cost is the glance cost, so
  // some schedule is always feasible here.
  best.budget = budget;
  return best;
}

std::vector<BaselineRow> baseline_policies(const ExitRecords& records, double budget, std::uint64_t seed,
                                           std::size_t random_seeds) {
  const std::size_t k = records_max_cubes(records);
  std::vector<BaselineRow> rows;

  const ThresholdSchedule ent = solve_thresholds(records, budget, ExitCriterion::entropy);
  const ExitOutcome ent_o = simulate(records, ent);
  rows.push_back({"entropy", budget, ent_o.mean_cost, ent_o.accuracy, 0.0, ent_o.histogram});

  const ExitOutcome conf_o = simulate(records, solve_thresholds(records, budget, ExitCriterion::confidence));
  rows.push_back({"confidence", budget, conf_o.mean_cost, conf_o.accuracy, 0.0, conf_o.histogram});

  // Random exits with the entropy schedule's exit counts.
  const std::size_t n = records.size();
  std::vector<double> accs;
  double cost_total = 0.0;
  for (std::size_t s = 0; s < random_seeds; ++s) {
    Rng rng(derive_seed({seed, 0x72786974ULL, s}));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[uniform_int(rng, 0, i - 1)]);
    std::vector<std::size_t> exits(n);
    std::size_t pos = 0;
    for (std::size_t t = 0; t <= k; ++t)
      for (std::size_t c = 0; c < ent_o.histogram[t]; ++c) exits[order[pos++]] = t;
    const ExitOutcome o = outcome_for_exits(records, exits);
    accs.push_back(o.accuracy);
    cost_total += o.mean_cost;
  }
  const double mean = std::accumulate(accs.begin(), accs.end(), 0.0) / static_cast<double>(accs.size());
  double var = 0.0;
  for (double a : accs) var += (a - mean) * (a - mean);
  const double m = static_cast<double>(accs.size());
  const double stderr_ = accs.size() > 1 ? std::sqrt(var / (m - 1.0) / m) : 0.0;
  rows.push_back({"random", budget, cost_total / m, mean, stderr_, ent_o.histogram});

  const std::vector<double> costs = mean_step_costs(records);
  std::size_t fixed = 0;
  for (std::size_t t = 0; t <= k; ++t)
    if (costs[t] <= budget) fixed = t;
  const ExitOutcome fixed_o = outcome_for_exits(records, std::vector<std::size_t>(n, fixed));
  rows.push_back({"fixed", budget, fixed_o.mean_cost, fixed_o.accuracy, 0.0, fixed_o.histogram});
  return rows;
}

void write_frontier_csv(std::ostream& out, const std::vector<BaselineRow>& rows) {
  out << "policy,budget,realized_cost,accuracy,accuracy_stderr,exit_histogram\n" << std::setprecision(17);
  for (const auto& r : rows) {
    out << r.policy << ',' << r.budget << ',' << r.realized_cost << ',' << r.accuracy << ',' << r.accuracy_stderr
        << ',';
    for (std::size_t t = 0; t < r.histogram.size(); ++t) out << (t ? ";" : "") << r.histogram[t];
    out << '\n';
  }
}

}  // namespace cubefocus
