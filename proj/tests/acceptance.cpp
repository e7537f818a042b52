// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "cubefocus/harness.hpp"
#include "support/oracles.hpp"

using namespace cubefocus;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void report(int id, const std::string& name, bool ok, const std::string& detail, double seconds) {
  std::printf("%s %d %s: %s (%.1f s)\n", ok ? "PASS" : "FAIL", id, name.c_str(), detail.c_str(), seconds);
  std::fflush(stdout);
  if (!ok) ++failures;
}

template <typename Fn>
void criterion(int id, const std::string& name, Fn&& fn) {
  const auto start = std::chrono::steady_clock::now();
  bool ok = false;
  std::string detail;
  try {
    ok = fn(detail);
  } catch (const std::exception& e) {
    detail = std::string("exception: ") + e.what();
  }
  const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  report(id, name, ok, detail, s);
}

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

double rel_error(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8}); }

// ---------------------------------------------------------------------------
// 1. Pixel-path centre gradient vs central differences.

bool pixel_gradient(std::string& detail) {
  Rng rng(101);
  double worst = 0.0;
  std::size_t probes = 0;
  for (int v = 0; v < 120; ++v) {
    const Shape shape{8 + uniform_int(rng, 0, 6), 8 + uniform_int(rng, 0, 6), 4 + uniform_int(rng, 0, 4),
                      1 + uniform_int(rng, 0, 1)};
    const Tensor video = oracle::random_tensor(shape, rng);
    const CubeSize size{2 + uniform_int(rng, 0, 4), 2 + uniform_int(rng, 0, 4), 1 + uniform_int(rng, 0, 2)};
    Coord3 c{};
    for (std::size_t a = 0; a < 3; ++a) {
      // Sample coordinates c - n/2 + i have fractional part in [0.25, 0.75].
      const double origin = static_cast<double>(uniform_int(rng, 0, shape[a] - size[a] - 1)) + 0.25 + 0.5 * uniform01(rng);
      c[a] = origin + size[a] / 2.0;
    }
    const Tensor weights = oracle::random_tensor({size.h, size.w, size.t, shape[3]}, rng);
    const Tensor zero(weights.shape);

    ad::Graph g;
    const ad::Var center = g.leaf(Tensor::vector({c[0], c[1], c[2]}));
    const ad::Var crop = crop_cube_pixelgrad(g, video, center, size);
    const ad::Var loss = ad::sum(g, ad::affine(g, crop, weights, zero));
    g.backward(loss);
    const Tensor grad = g.grad(center);

    for (std::size_t a = 0; a < 3; ++a) {
      const double fd = oracle::central_difference(
          [&](double x) {
            Coord3 cc = c;
            cc[a] = x;
            const Tensor cube = oracle::brute_crop(video, {cc, size});
            double s = 0.0;
            for (std::size_t i = 0; i < cube.size(); ++i) s += weights[i] * cube[i];
            return s;
          },
          c[a]);
      worst = std::max(worst, rel_error(grad[a], fd));
      ++probes;
    }
  }
  detail = "max rel error " + fmt("%.2e", worst) + " over " + std::to_string(probes) + " centre partials on 120 videos";
  return worst < 1e-4;
}

// ---------------------------------------------------------------------------
// 2. Feature-space estimator: centre-independent forward, FD-matching gradient.

bool feature_estimator(std::string& detail) {
  Rng rng(202);
  double worst = 0.0;
  bool identical = true;
  for (int rep = 0; rep < 100; ++rep) {
    FeatureOffsetGrid grid;
    grid.target = {2 + uniform_int(rng, 0, 3), 2 + uniform_int(rng, 0, 3), 1 + uniform_int(rng, 0, 2)};
    grid.interpolate = {true, true, rep % 4 != 0};
    const auto src = grid.source_extent();
    const std::size_t ch = 1 + uniform_int(rng, 0, 3);
    const Tensor enlarged = oracle::random_tensor({src[0], src[1], src[2], ch}, rng);
    const Coord3 cell{8.0, 8.0, 2.0};
    const Tensor weights = oracle::random_tensor({grid.target[0], grid.target[1], grid.target[2], ch}, rng);
    const Tensor zero(weights.shape);

    auto run = [&](const Coord3& c, Tensor* grad) {
      ad::Graph g;
      const ad::Var center = g.leaf(Tensor::vector({c[0], c[1], c[2]}));
      const ad::Var e = g.constant(enlarged);
      const ad::Var out = feature_center_interp(g, e, center, grid, cell);
      const Tensor value = g.value(out);
      if (grad) {
        g.backward(ad::sum(g, ad::affine(g, out, weights, zero)));
        *grad = g.grad(center);
      }
      return value;
    };
    Tensor grad;
    const Coord3 c1{10.0 + 40.0 * uniform01(rng), 10.0 + 40.0 * uniform01(rng), 2.0 + 10.0 * uniform01(rng)};
    const Coord3 c2{50.0, 50.0, 50.0};
    identical = identical && run(c1, &grad) == run(c2, nullptr);

    for (std::size_t a = 0; a < 3; ++a) {
      // Interpolation at o + delta / cell, evaluated by the brute-force oracle.
      const double fd = oracle::central_difference(
          [&](double delta) {
            double s = 0.0;
            for (std::size_t i = 0; i < grid.target[0]; ++i)
              for (std::size_t j = 0; j < grid.target[1]; ++j)
                for (std::size_t k = 0; k < grid.target[2]; ++k) {
                  Coord3 x = grid.offset(i, j, k);
                  if (grid.interpolate[a]) x[a] += delta / cell[a];
                  for (std::size_t q = 0; q < ch; ++q) s += weights.at(i, j, k, q) * oracle::brute_trilinear(enlarged, x, q);
                }
            return s;
          },
          0.0);
      if (!grid.interpolate[a] && grad[a] != 0.0) return false;
      worst = std::max(worst, rel_error(grad[a], fd));
    }
  }
  detail = std::string(identical ? "forward bit-identical" : "forward DIFFERS") + " under two centres; max rel error " +
           fmt("%.2e", worst) + " over 100 feature maps";
  return identical && worst < 1e-4;
}

// ---------------------------------------------------------------------------
// 3. Interpolation oracle and lattice exactness.

bool interpolation(std::string& detail) {
  Rng rng(303);
  double worst = 0.0;
  for (int p = 0; p < 1000; ++p) {
    const Shape shape{2 + uniform_int(rng, 0, 6), 2 + uniform_int(rng, 0, 6), 2 + uniform_int(rng, 0, 6), 1 + uniform_int(rng, 0, 2)};
    const Tensor v = oracle::random_tensor(shape, rng);
    Coord3 x{};
    for (std::size_t a = 0; a < 3; ++a) x[a] = uniform01(rng) * static_cast<double>(shape[a] - 1);
    const std::size_t c = uniform_int(rng, 0, shape[3] - 1);
    worst = std::max(worst, std::abs(trilinear_sample(v, x, c) - oracle::brute_trilinear(v, x, c)));
  }
  bool exact = true;
  for (int p = 0; p < 200; ++p) {
    const Shape shape{6 + uniform_int(rng, 0, 8), 6 + uniform_int(rng, 0, 8), 3 + uniform_int(rng, 0, 6), 1 + uniform_int(rng, 0, 2)};
    const Tensor v = oracle::random_tensor(shape, rng);
    const CubeSize size{1 + uniform_int(rng, 0, 5), 1 + uniform_int(rng, 0, 5), 1 + uniform_int(rng, 0, 2)};
    std::array<std::size_t, 3> origin{};
    Coord3 c{};
    for (std::size_t a = 0; a < 3; ++a) {
      origin[a] = uniform_int(rng, 0, shape[a] - size[a]);
      c[a] = static_cast<double>(origin[a]) + size[a] / 2.0;
    }
    const Tensor want = oracle::subarray(v, origin, size);
    exact = exact && crop_cube(v, {c, size}) == want && crop_direct(v, {c, size}) == want;
  }
  detail = "max abs error " + fmt("%.2e", worst) + " over 1000 probes; lattice crops " +
           (exact ? "bit-exact" : "NOT bit-exact") + " on 200 cubes";
  return worst <= 1e-12 && exact;
}

// ---------------------------------------------------------------------------
// Shared trained models for criteria 4 to 7.

struct Trained {
  DatasetSplits data;
  std::optional<TrainResult> feature;
  std::optional<TrainResult> pixel;
  ExitRecords val_records;
  std::uint64_t seed = 0;
  double train_seconds = 0.0;
};

const Trained& trained() {
  static std::optional<Trained> cache;
  if (cache) return *cache;
  const auto start = std::chrono::steady_clock::now();
  Trained t;
  const Config cfg = Config::load(fs::path(CUBEFOCUS_SOURCE_DIR) / "configs" / "default.cfg");
  t.seed = resolve_seed(cfg);
  t.data = generate(SynthConfig::from_config(cfg, t.seed), SplitSizes::from_config(cfg));
  const Architecture arch = Architecture::from_config(cfg);
  TrainConfig tc = TrainConfig::from_config(cfg, t.seed);
  tc.mode = GradientMode::featuregrad;
  t.feature = train(Model(arch, t.seed), t.data.train, t.data.val, tc);
  tc.mode = GradientMode::pixelgrad;
  t.pixel = train(Model(arch, t.seed), t.data.train, t.data.val, tc);
  t.val_records = evaluate(t.feature->model, t.data.val, PolicyKind::learned, t.seed).records();
  t.train_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  cache = std::move(t);
  return *cache;
}

std::vector<double> budgets_at(const ExitRecords& r, std::initializer_list<double> fractions) {
  const auto costs = mean_step_costs(r);
  std::vector<double> out;
  for (double f : fractions) out.push_back(std::floor(costs.front() + f * (costs.back() - costs.front())));
  return out;
}

std::vector<std::pair<double, double>> solved_costs;  // (budget, realized) for criterion 7

// ---------------------------------------------------------------------------
// 4. Solver vs exhaustive grid.

bool solver_vs_grid(std::string& detail) {
  const ExitRecords& r = trained().val_records;
  if (r.size() > 200 || records_max_cubes(r) != 2) {
    detail = "validation records must hold <= 200 samples with K = 2";
    return false;
  }
  bool ok = true;
  std::ostringstream os;
  for (double b : budgets_at(r, {0.1, 0.3, 0.5, 0.7, 0.9})) {
    const ThresholdSchedule s = solve_thresholds(r, b);
    const ExitOutcome o = simulate(r, s);
    solved_costs.emplace_back(b, o.mean_cost);
    const auto grid = oracle::grid_oracle(r, b, 50);
    // Compared in whole samples: 0.5 points of n samples is n / 200 samples.
    const double n = static_cast<double>(r.size());
    const double gap_samples = std::round(grid.accuracy * n) - std::round(o.accuracy * n);
    ok = ok && gap_samples * 200.0 <= n && o.mean_cost <= b;
    os << "B=" << b << " solver " << 100.0 * o.accuracy << "% @" << o.mean_cost << " grid " << 100.0 * grid.accuracy
       << "% @" << grid.mean_cost << "; ";
  }
  detail = os.str() + "n=" + std::to_string(r.size());
  return ok;
}

// ---------------------------------------------------------------------------
// 5. Policy and gradient-mode ablation pattern.

std::string percent_list(const std::vector<double>& v) {
  std::ostringstream os;
  for (std::size_t t = 0; t < v.size(); ++t) os << (t ? "/" : "") << 100.0 * v[t];
  return os.str();
}

bool ablation_pattern(std::string& detail) {
  const Trained& t = trained();
  const auto learned = evaluate(t.feature->model, t.data.test, PolicyKind::learned, t.seed).accuracy_per_step();
  const auto random = evaluate(t.feature->model, t.data.test, PolicyKind::random, t.seed).accuracy_per_step();
  const auto pixel = evaluate(t.pixel->model, t.data.test, PolicyKind::learned, t.seed).accuracy_per_step();

  const bool a = 100.0 * (learned[1] - random[1]) >= 3.0;
  bool b = true;
  for (std::size_t s = 0; s < learned.size(); ++s) b = b && learned[s] >= pixel[s];
  std::size_t inversions = 0;
  bool small = true;
  for (std::size_t s = 1; s < learned.size(); ++s)
    if (learned[s] < learned[s - 1]) {
      ++inversions;
      small = small && 100.0 * (learned[s - 1] - learned[s]) <= 0.5;
    }
  const bool c = inversions == 0 || (inversions == 1 && small);
  detail = std::string("(a) ") + (a ? "ok" : "no") + " (b) " + (b ? "ok" : "no") + " (c) " + (c ? "ok" : "no") +
           "; test accuracy per t: learned featuregrad " + percent_list(learned) + ", random " + percent_list(random) +
           ", learned pixelgrad " + percent_list(pixel) + "; training " + fmt("%.0f", t.train_seconds) + " s";
  return a && b && c;
}

// ---------------------------------------------------------------------------
// 6. Exit criterion ablation pattern.

bool exit_pattern(std::string& detail) {
  const ExitRecords& r = trained().val_records;
  bool ok = true;
  std::ostringstream os;
  for (double b : budgets_at(r, {0.25, 0.5, 0.75})) {
    const auto rows = baseline_policies(r, b, trained().seed, 100);
    double ent = 0, conf = 0, rnd = 0, se = 0;
    for (const auto& row : rows) {
      if (row.policy == "entropy") ent = row.accuracy, solved_costs.emplace_back(b, row.realized_cost);
      if (row.policy == "confidence") conf = row.accuracy, solved_costs.emplace_back(b, row.realized_cost);
      if (row.policy == "random") rnd = row.accuracy, se = row.accuracy_stderr;
    }
    ok = ok && 100.0 * (ent - rnd) >= 1.0 && 100.0 * (ent - conf) >= -0.5;
    os << "B=" << b << " entropy " << 100.0 * ent << "% random " << 100.0 * rnd << "+-" << 100.0 * se
       << "% confidence " << 100.0 * conf << "%; ";
  }
  detail = os.str();
  return ok;
}

// ---------------------------------------------------------------------------
// 7. Budget hardness over every solved schedule.

bool budget_hardness(std::string& detail) {
  const ExitRecords& r = trained().val_records;
  for (double b : budgets_at(r, {0.0, 0.05, 0.15, 0.4, 0.6, 0.8, 0.95, 1.0}))
    for (ExitCriterion c : {ExitCriterion::entropy, ExitCriterion::confidence})
      solved_costs.emplace_back(b, simulate(r, solve_thresholds(r, b, c)).mean_cost);
  std::size_t violations = 0;
  double slack = 1e300;
  for (const auto& [b, cost] : solved_costs) {
    violations += cost > b;
    slack = std::min(slack, b - cost);
  }
  detail = std::to_string(solved_costs.size()) + " schedules, " + std::to_string(violations) +
           " over budget, min slack " + fmt("%.1f", slack);
  return violations == 0 && !solved_costs.empty();
}

// ---------------------------------------------------------------------------
// 8. Cost locality and frame dedup.

bool cost_locality(std::string& detail) {
  const Architecture a;
  const double ratio = static_cast<double>(a.local_cube_cost()) / static_cast<double>(a.local_cost_on(a.video));
  const double volume = static_cast<double>(a.cube.volume()) / static_cast<double>(a.video[0] * a.video[1] * a.video[2]);
  const double off = std::abs(ratio / volume - 1.0);

  Architecture frame = a;
  frame.cube = {24, 24, 1};
  const CubeSpec first{{32.0, 32.0, 5.5}, frame.cube};
  const CubeSpec again{{20.0, 40.0, 5.5}, frame.cube};
  std::set<std::size_t> seen;
  const Madds full = frame.local_cube_cost();
  const Madds c1 = cube_cost(first, frame.video, seen, full);
  for (std::size_t f : cube_frames(first, frame.video)) seen.insert(f);
  const Madds c2 = cube_cost(again, frame.video, seen, full);
  detail = "cube/full f_L cost " + fmt("%.5f", ratio) + " vs volume ratio " + fmt("%.5f", volume) + " (" +
           fmt("%.1f", 100.0 * off) + "% off); overlapped single-frame cube adds " + std::to_string(c2) +
           " after " + std::to_string(c1);
  return off <= 0.10 && c2 == 0 && c1 == full;
}

// ---------------------------------------------------------------------------
// 9. Byte-stable CSVs across two train + eval runs.

bool determinism(std::string& detail) {
  Config cfg = Config::load(fs::path(CUBEFOCUS_SOURCE_DIR) / "configs" / "default.cfg");
  const std::pair<const char*, const char*> reduced[] = {
      {"height", "32"}, {"width", "32"},  {"frames", "8"},      {"glyph", "8"},          {"classes", "4"},
      {"window", "3"},  {"train_size", "48"}, {"val_size", "16"}, {"test_size", "16"},   {"cube_h", "16"},
      {"cube_w", "16"}, {"epochs", "2"},  {"policy_epochs", "1"}, {"policy_hidden", "8"}};
  for (const auto& [k, v] : reduced) cfg.set(k, v);
  const fs::path root = fs::temp_directory_path() / "cubefocus_acceptance_determinism";
  fs::remove_all(root);
  const std::uint64_t seed = 11;
  cmd_generate(cfg, seed, root / "data");
  const char* files[] = {"training_curve.csv", "cost_ledger.csv", "records.csv", "accuracy.csv", "eval_summary.csv"};
  std::vector<std::string> runs[2];
  for (int run = 0; run < 2; ++run) {
    const fs::path dir = root / ("run" + std::to_string(run));
    const TrainOutputs tr = cmd_train(root / "data", cfg, seed, dir);
    cmd_eval(tr.checkpoint, root / "data", "test", PolicyKind::learned, seed, dir);
    for (const char* f : files) {
      std::ifstream in(dir / f, std::ios::binary);
      std::stringstream ss;
      ss << in.rdbuf();
      runs[run].push_back(ss.str());
    }
  }
  std::size_t same = 0;
  for (std::size_t i = 0; i < runs[0].size(); ++i) same += !runs[0][i].empty() && runs[0][i] == runs[1][i];
  fs::remove_all(root);
  detail = std::to_string(same) + "/" + std::to_string(runs[0].size()) + " CSVs byte-identical";
  return same == runs[0].size();
}

}  // namespace

int main() {
  criterion(1, "pixel-path centre gradient", pixel_gradient);
  criterion(2, "feature-space estimator", feature_estimator);
  criterion(3, "trilinear interpolation oracle", interpolation);
  try {
    std::fprintf(stderr, "training featuregrad and pixelgrad models on the default config...\n");
    trained();
  } catch (const std::exception& e) {
    std::fprintf(stderr, "training failed: %s\n", e.what());
  }
  criterion(4, "threshold solver vs grid oracle", solver_vs_grid);
  criterion(5, "policy and gradient ablation pattern", ablation_pattern);
  criterion(6, "exit criterion ablation pattern", exit_pattern);
  criterion(7, "budget constraint", budget_hardness);
  criterion(8, "cost locality and frame dedup", cost_locality);
  criterion(9, "determinism", determinism);
  return failures == 0 ? 0 : 1;
}
