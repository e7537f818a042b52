#include "cubefocus/harness.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "json.hpp"

#include "cubefocus/gradcheck.hpp"
#include "cubefocus/rng.hpp"

namespace cubefocus {

namespace {

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

std::ifstream open_in(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return in;
}

}  // namespace

void RunManifest::write(const fs::path& path) const {
  nlohmann::ordered_json j;
  j["command"] = command;
  j["seed"] = seed;
  j["config"] = nlohmann::ordered_json::object();
  for (const auto& [k, v] : config.values()) j["config"][k] = v;
  if (!checkpoint.empty()) j["checkpoint"] = checkpoint.string();
  j["outputs"] = nlohmann::ordered_json::array();
  for (const auto& p : outputs) j["outputs"].push_back(p.string());
  j["started"] = started;
  j["finished"] = finished;
  open_out(path) << j.dump(2) << '\n';
}

void cmd_generate(const Config& cfg, std::uint64_t seed, const fs::path& out_dir) {
  RunManifest m{"generate", cfg, seed, {}, {}, utc_now(), {}};
  const SynthConfig synth = SynthConfig::from_config(cfg, seed);
  const SplitSizes sizes = SplitSizes::from_config(cfg);
  write_dataset(out_dir, generate(synth, sizes));
  m.outputs = {out_dir / "manifest.csv", out_dir / "train", out_dir / "val", out_dir / "test"};
  m.finished = utc_now();
  m.write(out_dir / "generate_manifest.json");
}

TrainOutputs cmd_train(const fs::path& dataset, const Config& cfg, std::uint64_t seed, const fs::path& out_dir,
                       const fs::path& init) {
  RunManifest m{"train", cfg, seed, init, {}, utc_now(), {}};
  const Architecture arch = Architecture::from_config(cfg);
  const TrainConfig tc = TrainConfig::from_config(cfg, seed);
  const Dataset train_set = read_split(dataset, "train");
  const Dataset val = read_split(dataset, "val");
  if (train_set.empty()) throw std::runtime_error("dataset " + dataset.string() + " has no training samples");
  if (train_set.front().video.shape != arch.video) {
    throw ConfigError("dataset videos are " + shape_string(train_set.front().video.shape) +
                      " but the config expects " + shape_string(arch.video));
  }

  Model model(arch, seed);
  if (!init.empty()) {
    Model::Loaded loaded = Model::load(init);
    if (loaded.model.arch().video != arch.video || !(loaded.model.arch().cube == arch.cube)) {
      throw ConfigError("checkpoint " + init.string() + " was trained with a different architecture");
    }
    try {
      model = Model(arch, std::move(loaded.model.params()));
    } catch (const std::invalid_argument& e) {
      throw ConfigError("checkpoint " + init.string() + " does not match the config: " + e.what());
    }
  }
  TrainResult result = train(std::move(model), train_set, val, tc);

  TrainOutputs out;
  fs::create_directories(out_dir);
  out.checkpoint = out_dir / "model.ckpt";
  out.curve = out_dir / "training_curve.csv";
  out.ledger = out_dir / "cost_ledger.csv";
  result.model.save(out.checkpoint, cfg);
  {
    auto f = open_out(out.curve);
    write_curve_csv(f, result.curve);
  }
  {
    auto f = open_out(out.ledger);
    arch.ledger().write_csv(f);
  }
  out.curve_rows = std::move(result.curve);
  m.outputs = {out.checkpoint, out.curve, out.ledger};
  m.finished = utc_now();
  m.write(out_dir / "train_manifest.json");
  return out;
}

EvalOutputs cmd_eval(const fs::path& checkpoint, const fs::path& dataset, const std::string& split,
                     PolicyKind policy, std::uint64_t seed, const fs::path& out_dir) {
  const std::string started = utc_now();
  const Model::Loaded loaded = Model::load(checkpoint);
  const Dataset data = read_split(dataset, split);
  if (data.empty()) throw std::runtime_error("split '" + split + "' of " + dataset.string() + " is empty");
  const Evaluation ev = evaluate(loaded.model, data, policy, seed);

  EvalOutputs out;
  fs::create_directories(out_dir);
  out.records = out_dir / "records.csv";
  out.accuracy = out_dir / "accuracy.csv";
  out.summary = out_dir / "eval_summary.csv";
  out.accuracy_per_step = ev.accuracy_per_step();
  out.mean_policy_iou = ev.mean_policy_iou(data);
  {
    auto f = open_out(out.records);
    write_records_csv(f, ev.records());
  }
  {
    auto f = open_out(out.accuracy);
    write_accuracy_csv(f, out.accuracy_per_step);
  }
  {
    auto f = open_out(out.summary);
    f << std::setprecision(17) << "metric,value\n"
      << "policy," << to_string(policy) << '\n'
      << "split," << split << '\n'
      << "samples," << data.size() << '\n'
      << "mean_policy_iou," << out.mean_policy_iou << '\n'
      << "final_accuracy," << out.accuracy_per_step.back() << '\n';
  }
  RunManifest m{"eval", loaded.config, seed, checkpoint, {out.records, out.accuracy, out.summary}, started,
                utc_now()};
  m.write(out_dir / "eval_manifest.json");
  return out;
}

ThresholdSchedule cmd_solve_thresholds(const fs::path& records, double budget, ExitCriterion criterion,
                                       const fs::path& schedule_out) {
  auto in = open_in(records);
  const ExitRecords recs = read_records_csv(in);
  ThresholdSchedule s = solve_thresholds(recs, budget, criterion);
  auto out = open_out(schedule_out);
  write_schedule_csv(out, s);
  return s;
}

std::vector<BaselineRow> cmd_sweep(const fs::path& records, const std::vector<double>& budgets,
                                   std::uint64_t seed, const fs::path& frontier_out) {
  auto in = open_in(records);
  const ExitRecords recs = read_records_csv(in);
  std::vector<BaselineRow> rows;
  for (double b : budgets) {
    auto r = baseline_policies(recs, b, seed);
    rows.insert(rows.end(), r.begin(), r.end());
  }
  auto out = open_out(frontier_out);
  write_frontier_csv(out, rows);
  return rows;
}

// ---------------------------------------------------------------------------
// gradcheck

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.data) v = lo + (hi - lo) * uniform01(rng);
  return t;
}

// Reduces a node to a scalar with fixed random weights, so every output
// element contributes a distinct gradient.
ad::Var project(ad::Graph& g, ad::Var v, std::uint64_t seed) {
  Rng rng(seed);
  const Shape& s = g.value(v).shape;
  return ad::sum(g, ad::affine(g, v, random_tensor(s, rng), Tensor(s)));
}

GradcheckRow op_row(const std::string& name, const ScalarGraphFn& fn, const std::vector<Tensor>& inputs,
                    std::uint64_t seed) {
  const GradCheckResult r = check_gradients(fn, inputs, 0, seed);
  return {name, r.max_rel_error, r.probes};
}

// Finite differences on a model's own parameters, restricted to `groups`. In
// feature mode the forward value does not depend on the cube centres, so the
// policy and global encoder (which feeds the policy) carry estimated rather
// than exact gradients and are left out.
GradcheckRow model_row(const std::string& name, const Model& base, const Tensor& video, std::size_t label,
                       GradientMode mode, std::initializer_list<ParamGroup> groups, std::size_t probes,
                       std::uint64_t seed) {
  ForwardOptions opt;
  opt.path = ForwardOptions::Path::train;
  opt.mode = mode;
  ad::Graph g;
  const ForwardResult r = forward(g, base, video, opt, label);
  g.backward(r.loss);

  auto loss_of = [&](const Model& m) {
    ad::Graph h;
    return h.value(forward(h, m, video, opt, label).loss)[0];
  };

  Rng rng(seed);
  const auto& params = base.params();
  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < params.values.size(); ++i)
    if (std::find(groups.begin(), groups.end(), params.groups[i]) != groups.end()) eligible.push_back(i);

  GradcheckRow row{name, 0.0, 0};
  Model probe = base;
  constexpr double step = 1e-5;
  for (std::size_t p = 0; p < probes; ++p) {
    const std::size_t i = eligible[uniform_int(rng, 0, eligible.size() - 1)];
    const std::size_t x = uniform_int(rng, 0, params.values[i].size() - 1);
    const double analytic = g.grad(r.param_vars[i])[x];
    double& w = probe.params().values[i][x];
    const double saved = w;
    w = saved + step;
    const double up = loss_of(probe);
    w = saved - step;
    const double down = loss_of(probe);
    w = saved;
    row.max_rel_error = std::max(row.max_rel_error, relative_error(analytic, (up - down) / (2 * step)));
    ++row.probes;
  }
  return row;
}

}  // namespace

std::vector<GradcheckRow> cmd_gradcheck(std::uint64_t seed) {
  Rng rng(derive_seed({seed, 0x67636b}));
  std::vector<GradcheckRow> rows;
  auto s = [&](std::uint64_t k) { return derive_seed({seed, k}); };
  const Shape vec{7};

  rows.push_back(op_row("add", [&](ad::Graph& g, std::span<const ad::Var> v) {
    return project(g, ad::add(g, v[0], v[1]), s(1));
  }, {random_tensor(vec, rng), random_tensor(vec, rng)}, s(101)));
  rows.push_back(op_row("sub", [&](ad::Graph& g, std::span<const ad::Var> v) {
    return project(g, ad::sub(g, v[0], v[1]), s(2));
  }, {random_tensor(vec, rng), random_tensor(vec, rng)}, s(102)));
  rows.push_back(op_row("scale", [&](ad::Graph& g, std::span<const ad::Var> v) {
    return project(g, ad::scale(g, v[0], -2.5), s(3));
  }, {random_tensor(vec, rng)}, s(103)));
  rows.push_back(op_row("reshape", [&](ad::Graph& g, std::span<const ad::Var> v) {
    return project(g, ad::reshape(g, v[0], Shape{2, 3}), s(4));
  }, {random_tensor({6}, rng)}, s(104)));
  rows.push_back(op_row("slice", [&](ad::Graph& g, std::span<const ad::Var> v) {
    return project(g, ad::slice(g, v[0], 2, 3), s(5));
  }, {random_tensor(vec, rng)}, s(105)));
  rows.push_back(op_row("concat", [&](ad::Graph& g, std::span<const ad::Var> v) {
    return project(g, ad::concat(g, v), s(6));
  }, {random_tensor({3}, rng), random_tensor({4}, rng)}, s(106)));
  rows.push_back(op_row("maximum", [&](ad::Graph& g, std::span<const ad::Var> v) {
    return project(g, ad::maximum(g, v[0], v[1]), s(7));
  }, {random_tensor(vec, rng), random_tensor(vec, rng)}, s(107)));
  rows.push_back(op_row("relu", [&](ad::Graph& g, std::span<const ad::Var> v) {
    return project(g, ad::relu(g, v[0]), s(8));
  }, {random_tensor(vec, rng)}, s(108)));
  rows.push_back(op_row("sigmoid", [&](ad::Graph& g, std::span<const ad::Var> v) {
    return project(g, ad::sigmoid(g, v[0]), s(9));
  }, {random_tensor(vec, rng, -3, 3)}, s(109)));
  const Tensor factor = random_tensor(vec, rng);
  const Tensor shift = random_tensor(vec, rng);
  rows.push_back(op_row("affine", [&](ad::Graph& g, std::span<const ad::Var> v) {
    return project(g, ad::affine(g, v[0], factor, shift), s(10));
  }, {random_tensor(vec, rng)}, s(110)));
  rows.push_back(op_row("linear", [&](ad::Graph& g, std::span<const ad::Var> v) {
    return project(g, ad::linear(g, v[0], v[1], v[2]), s(11));
  }, {random_tensor({5}, rng), random_tensor({4, 5}, rng), random_tensor({4}, rng)}, s(111)));
  rows.push_back(op_row("conv3d", [&](ad::Graph& g, std::span<const ad::Var> v) {
    return project(g, ad::conv3d(g, v[0], v[1], {2, 1, 2}), s(12));
  }, {random_tensor({6, 5, 4, 2}, rng), random_tensor({2, 3, 2, 2, 3}, rng)}, s(112)));
  rows.push_back(op_row("bias_add", [&](ad::Graph& g, std::span<const ad::Var> v) {
    return project(g, ad::bias_add(g, v[0], v[1]), s(13));
  }, {random_tensor({3, 2, 2, 3}, rng), random_tensor({3}, rng)}, s(113)));
  rows.push_back(op_row("global_average_pool", [&](ad::Graph& g, std::span<const ad::Var> v) {
    return project(g, ad::global_average_pool(g, v[0]), s(14));
  }, {random_tensor({3, 2, 2, 3}, rng)}, s(114)));
  rows.push_back(op_row("softmax_cross_entropy", [&](ad::Graph& g, std::span<const ad::Var> v) {
    return ad::softmax_cross_entropy(g, v[0], 2);
  }, {random_tensor({5}, rng, -2, 2)}, s(115)));

  const Tensor video = random_tensor({12, 12, 6, 2}, rng);
  const CubeSize cube{4, 5, 2};
  rows.push_back(op_row("crop_cube_pixelgrad", [&](ad::Graph& g, std::span<const ad::Var> v) {
    return project(g, crop_cube_pixelgrad(g, video, v[0], cube), s(16));
  }, {Tensor::vector({5.37, 6.21, 3.44})}, s(116)));

  FeatureOffsetGrid grid;
  grid.target = {3, 3, 2};
  rows.push_back(op_row("sample_at_offsets", [&](ad::Graph& g, std::span<const ad::Var> v) {
    return project(g, sample_at_offsets(g, v[0], v[1], grid), s(17));
  }, {random_tensor({4, 4, 3, 2}, rng), Tensor::vector({0.13, -0.31, 0.22})}, s(117)));

  // Full training loss on a small architecture.
  Architecture arch;
  arch.video = {32, 32, 8, 1};
  arch.cube = CubeSize{16, 16, 4};
  arch.classes = 4;
  arch.global_width = 3;
  arch.local_width = 3;
  arch.policy_hidden = 8;
  Model model(arch, seed);
  // Non-zero classifier and biases so every group carries signal.
  for (std::size_t i = 0; i < model.params().values.size(); ++i) {
    for (double& w : model.params().values[i].data)
      if (w == 0.0) w = 0.1 * (2.0 * uniform01(rng) - 1.0);
  }
  const Tensor small_video = random_tensor(arch.video, rng);
  rows.push_back(model_row("training_loss[pixelgrad]", model, small_video, 1, GradientMode::pixelgrad,
                           {ParamGroup::global, ParamGroup::policy, ParamGroup::local, ParamGroup::classifier}, 60,
                           s(118)));
  rows.push_back(model_row("training_loss[featuregrad]", model, small_video, 1, GradientMode::featuregrad,
                           {ParamGroup::local, ParamGroup::classifier}, 60, s(119)));
  return rows;
}

}  // namespace cubefocus
