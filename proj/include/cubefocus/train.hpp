#pragma once

// Minibatch SGD with momentum on the summed per-step cross-entropy, plus
// batch evaluation that turns per-sample prediction traces into exit records.

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "cubefocus/config.hpp"
#include "cubefocus/earlyexit.hpp"
#include "cubefocus/model.hpp"
#include "cubefocus/synthdata.hpp"

namespace cubefocus {

enum class Schedule { end_to_end, two_stage };
Schedule schedule_from_string(std::string_view s);
std::string_view to_string(Schedule s);

struct TrainConfig {
  GradientMode mode = GradientMode::featuregrad;
  Schedule schedule = Schedule::two_stage;
  // end_to_end: `epochs` joint epochs. two_stage: `epochs` of encoder and
  // classifier training under random cubes, then `policy_epochs` of policy-only
  // training. With two_stage and epochs = 0 only the policy phase runs, which
  // is how a pretrained checkpoint is refined.
  std::size_t epochs = 12;
  std::size_t policy_epochs = 6;
  std::size_t batch_size = 16;
  double learning_rate = 0.05;
  double policy_learning_rate = 0.05;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::uint64_t seed = 0;

  static TrainConfig from_config(const Config& cfg, std::uint64_t seed);
};

struct EpochStats {
  std::size_t epoch = 0;   // 1-based, across phases
  std::string phase;       // "joint", "encoders", "policy"
  double learning_rate = 0.0;  // at the start of the epoch
  double train_loss = 0.0;     // mean per-sample loss
  double val_accuracy = 0.0;   // final-step accuracy, -1 without a validation set
};

struct TrainResult {
  Model model;
  std::vector<EpochStats> curve;
};

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// `val` may be empty. Samples inside a minibatch are processed in parallel,
// and their gradients are reduced in a fixed order, so the result does not
// depend on the thread count.
TrainResult train(Model model, const Dataset& train_set, const Dataset& val, const TrainConfig& cfg);

// CSV: epoch,phase,learning_rate,train_loss,val_accuracy
void write_curve_csv(std::ostream& out, const std::vector<EpochStats>& curve);

struct SampleResult {
  std::size_t sample_id = 0;
  std::size_t label = 0;
  PredictionTrace trace;
};

struct Evaluation {
  std::vector<SampleResult> samples;

  // Accuracy of argmax p_t for t = 0..K.
  std::vector<double> accuracy_per_step() const;
  ExitRecords records() const;
  // Mean over samples and cubes of the best IoU between a planned cube and
  // the sample's ground-truth cube.
  double mean_policy_iou(const Dataset& data) const;
};

// Test-path inference on every sample. Random policies draw centres from a
// stream derived from (seed, sample id).
Evaluation evaluate(const Model& model, const Dataset& data, PolicyKind policy, std::uint64_t seed);

// CSV: t,accuracy
void write_accuracy_csv(std::ostream& out, const std::vector<double>& accuracy);

}  // namespace cubefocus
