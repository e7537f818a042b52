#include "cubefocus/train.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numbers>
#include <numeric>
#include <ostream>

#include "cubefocus/parallel.hpp"
#include "cubefocus/rng.hpp"

namespace cubefocus {

Schedule schedule_from_string(std::string_view s) {
  if (s == "end_to_end") return Schedule::end_to_end;
  if (s == "two_stage") return Schedule::two_stage;
  throw ConfigError("unknown schedule '" + std::string(s) + "' (end_to_end|two_stage)");
}

std::string_view to_string(Schedule s) { return s == Schedule::end_to_end ? "end_to_end" : "two_stage"; }

TrainConfig TrainConfig::from_config(const Config& cfg, std::uint64_t seed) {
  TrainConfig t;
  t.mode = gradient_mode_from_string(cfg.get_string("mode"));
  t.schedule = schedule_from_string(cfg.get_string("schedule"));
  t.epochs = cfg.get_size("epochs");
  t.policy_epochs = cfg.get_size("policy_epochs");
  t.batch_size = cfg.get_size("batch_size");
  t.learning_rate = cfg.get_double("learning_rate");
  t.policy_learning_rate = cfg.get_double("policy_learning_rate");
  t.momentum = cfg.get_double("momentum");
  t.weight_decay = cfg.get_double("weight_decay");
  t.seed = seed;
  if (t.batch_size == 0) throw ConfigError("batch_size must be positive");
  if (t.schedule == Schedule::end_to_end ? t.epochs == 0 : t.epochs + t.policy_epochs == 0) {
    throw ConfigError("the schedule has no training epochs");
  }
  if (!(t.learning_rate > 0.0) || !(t.policy_learning_rate > 0.0)) {
    throw ConfigError("learning rates must be positive");
  }
  if (!(t.momentum >= 0.0 && t.momentum < 1.0)) throw ConfigError("momentum must be in [0, 1)");
  if (!(t.weight_decay >= 0.0)) throw ConfigError("weight_decay must be nonnegative");
  return t;
}

namespace {

struct Phase {
  std::string name;
  std::size_t epochs = 0;
  double learning_rate = 0.0;
  PolicyKind policy = PolicyKind::learned;
  std::array<bool, 4> trainable{true, true, true, true};
};

std::vector<Phase> phases_for(const TrainConfig& cfg) {
  if (cfg.schedule == Schedule::end_to_end) return {{"joint", cfg.epochs, cfg.learning_rate}};
  std::vector<Phase> p;
  if (cfg.epochs > 0) {
    p.push_back({"encoders", cfg.epochs, cfg.learning_rate, PolicyKind::random, {true, false, true, true}});
  }
  if (cfg.policy_epochs > 0) {
    p.push_back({"policy", cfg.policy_epochs, cfg.policy_learning_rate, PolicyKind::learned,
                 {false, true, false, false}});
  }
  return p;
}

bool decays(const std::string& name) {
  return name.ends_with(".kernel") || name.ends_with(".weight");
}

}  // namespace

TrainResult train(Model model, const Dataset& train_set, const Dataset& val, const TrainConfig& cfg) {
  if (train_set.empty()) throw std::invalid_argument("training set is empty");
  ParameterSet& params = model.params();
  const std::size_t np = params.values.size();
  std::vector<Tensor> velocity;
  for (const auto& v : params.values) velocity.emplace_back(v.shape);

  std::vector<EpochStats> curve;
  std::size_t epoch_index = 0;
  for (const Phase& phase : phases_for(cfg)) {
    std::vector<std::size_t> active;
    for (std::size_t i = 0; i < np; ++i)
      if (phase.trainable[static_cast<std::size_t>(params.groups[i])]) active.push_back(i);
    for (std::size_t i : active) std::fill(velocity[i].data.begin(), velocity[i].data.end(), 0.0);

    const std::size_t batches = (train_set.size() + cfg.batch_size - 1) / cfg.batch_size;
    const std::size_t total_steps = batches * phase.epochs;
    std::size_t step = 0;
    for (std::size_t e = 0; e < phase.epochs; ++e) {
      ++epoch_index;
      Rng shuffle_rng(derive_seed({cfg.seed, 0x73687566ULL, epoch_index}));
      std::vector<std::size_t> order(train_set.size());
      std::iota(order.begin(), order.end(), 0);
      for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[uniform_int(shuffle_rng, 0, i - 1)]);

      EpochStats stats;
      stats.epoch = epoch_index;
      stats.phase = phase.name;
      double loss_total = 0.0;
      for (std::size_t b = 0; b < batches; ++b, ++step) {
        const double lr = phase.learning_rate * 0.5 *
                          (1.0 + std::cos(std::numbers::pi * static_cast<double>(step) / static_cast<double>(total_steps)));
        if (b == 0) stats.learning_rate = lr;
        const std::size_t first = b * cfg.batch_size;
        const std::size_t count = std::min(cfg.batch_size, train_set.size() - first);

        std::vector<std::vector<Tensor>> grads(count);
        std::vector<double> losses(count, 0.0);
        parallel_for(count, [&](std::size_t j) {
          const AnnotatedSample& s = train_set[order[first + j]];
          ForwardOptions opt;
          opt.path = ForwardOptions::Path::train;
          opt.mode = cfg.mode;
          opt.policy = phase.policy;
          opt.trainable = phase.trainable;
          opt.random_stream = derive_seed({cfg.seed, 0x63756265ULL, epoch_index, s.id});
          ad::Graph g;
          try {
            const ForwardResult r = forward(g, model, s.video, opt, s.label);
            g.backward(r.loss);
            losses[j] = g.value(r.loss)[0];
            for (std::size_t i : active) grads[j].push_back(g.grad(r.param_vars[i]));
          } catch (const std::domain_error& err) {
            throw TrainingDiverged("training diverged in epoch " + std::to_string(epoch_index) + " (phase " +
                                   phase.name + "), sample " + std::to_string(s.id) + ": " + err.what());
          }
        });

        for (std::size_t j = 0; j < count; ++j) loss_total += losses[j];
        const double inv = 1.0 / static_cast<double>(count);
        for (std::size_t a = 0; a < active.size(); ++a) {
          const std::size_t i = active[a];
          Tensor& w = params.values[i];
          Tensor& v = velocity[i];
          const double wd = decays(params.names[i]) ? cfg.weight_decay : 0.0;
          for (std::size_t x = 0; x < w.size(); ++x) {
            double gsum = 0.0;
            for (std::size_t j = 0; j < count; ++j) gsum += grads[j][a][x];
            v[x] = cfg.momentum * v[x] + gsum * inv + wd * w[x];
            w[x] -= lr * v[x];
          }
          if (!w.all_finite()) {
            throw TrainingDiverged("parameter " + params.names[i] + " became non-finite in epoch " +
                                   std::to_string(epoch_index));
          }
        }
      }
      stats.train_loss = loss_total / static_cast<double>(train_set.size());
      if (!std::isfinite(stats.train_loss)) {
        throw TrainingDiverged("training loss is not finite in epoch " + std::to_string(epoch_index));
      }
      stats.val_accuracy = val.empty() ? -1.0 : evaluate(model, val, phase.policy, cfg.seed).accuracy_per_step().back();
      curve.push_back(stats);
    }
  }
  return {std::move(model), std::move(curve)};
}

void write_curve_csv(std::ostream& out, const std::vector<EpochStats>& curve) {
  out << "epoch,phase,learning_rate,train_loss,val_accuracy\n" << std::setprecision(17);
  for (const auto& e : curve) {
    out << e.epoch << ',' << e.phase << ',' << e.learning_rate << ',' << e.train_loss << ',' << e.val_accuracy
        << '\n';
  }
}

namespace {

std::size_t argmax(const Tensor& p) {
  return static_cast<std::size_t>(std::max_element(p.data.begin(), p.data.end()) - p.data.begin());
}

}  // namespace

std::vector<double> Evaluation::accuracy_per_step() const {
  if (samples.empty()) return {};
  const std::size_t steps = samples.front().trace.probs.size();
  std::vector<double> acc(steps, 0.0);
  for (const auto& s : samples)
    for (std::size_t t = 0; t < steps; ++t) acc[t] += argmax(s.trace.probs[t]) == s.label;
  for (double& a : acc) a /= static_cast<double>(samples.size());
  return acc;
}

ExitRecords Evaluation::records() const {
  ExitRecords out;
  for (const auto& s : samples) {
    ExitRecord r{s.sample_id, {}};
    for (std::size_t t = 0; t < s.trace.probs.size(); ++t) {
      const Tensor& p = s.trace.probs[t];
      StepRecord step;
      step.entropy = entropy(p.data);
      step.correct = argmax(p) == s.label;
      step.cumulative_madds = s.trace.cumulative_cost[t];
      step.confidence = *std::max_element(p.data.begin(), p.data.end());
      r.steps.push_back(step);
    }
    out.push_back(std::move(r));
  }
  return out;
}

double Evaluation::mean_policy_iou(const Dataset& data) const {
  if (samples.size() != data.size()) throw std::invalid_argument("evaluation does not match dataset");
  double total = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    double best = 0.0;
    for (const auto& c : samples[i].trace.cube_specs) best = std::max(best, policy_iou(c, data[i].truth));
    total += best;
  }
  return samples.empty() ? 0.0 : total / static_cast<double>(samples.size());
}

Evaluation evaluate(const Model& model, const Dataset& data, PolicyKind policy, std::uint64_t seed) {
  Evaluation ev;
  ev.samples.resize(data.size());
  parallel_for(data.size(), [&](std::size_t i) {
    const AnnotatedSample& s = data[i];
    InferenceSession session(model, s.video, policy, derive_seed({seed, 0x6576616cULL, s.id}));
    ev.samples[i] = {s.id, s.label, session.run()};
  });
  return ev;
}

void write_accuracy_csv(std::ostream& out, const std::vector<double>& accuracy) {
  out << "t,accuracy\n" << std::setprecision(17);
  for (std::size_t t = 0; t < accuracy.size(); ++t) out << t << ',' << accuracy[t] << '\n';
}

}  // namespace cubefocus
