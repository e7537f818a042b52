#pragma once

// Glance-and-focus video classifier:
//   global encoder  - light conv stack over a 2x spatially downscaled video
//   policy          - MLP on the flattened global features emitting all K cube centres
//   local encoder   - heavier conv stack applied to each selected cube
//   classifier      - linear head over [max-pooled local features, pooled global features]
// A prediction p_0 comes from the glance alone; p_t follows the t-th cube.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "cubefocus/autodiff.hpp"
#include "cubefocus/config.hpp"
#include "cubefocus/costmodel.hpp"
#include "cubefocus/cropgrad.hpp"

namespace cubefocus {

enum class GradientMode { pixelgrad, featuregrad };
enum class PolicyKind { learned, random, random_spatial, random_temporal };

GradientMode gradient_mode_from_string(std::string_view s);
PolicyKind policy_kind_from_string(std::string_view s);
std::string_view to_string(GradientMode m);
std::string_view to_string(PolicyKind p);

struct ConvLayerSpec {
  std::array<std::size_t, 3> kernel{};
  Stride3 stride{};
  std::size_t out_channels = 0;
};

struct Architecture {
  Shape video{64, 64, 16, 1};
  CubeSize cube{24, 24, 4};
  std::size_t max_cubes = 2;
  std::size_t classes = 10;
  std::size_t global_width = 6;
  std::size_t local_width = 8;
  std::size_t policy_hidden = 32;

  static Architecture from_config(const Config& cfg);
  // Throws ConfigError when the shapes do not tile.
  void validate() const;

  std::vector<ConvLayerSpec> global_layers() const;
  std::vector<ConvLayerSpec> local_layers() const;
  Shape glance_input_shape() const;
  Shape global_feature_shape() const;
  Shape encoder_output_shape(const std::vector<ConvLayerSpec>& layers, Shape input) const;
  // Product of the local encoder's strides: pixels per feature cell.
  Stride3 local_stride() const;
  std::size_t local_channels() const { return local_layers().back().out_channels; }
  std::size_t global_channels() const { return global_layers().back().out_channels; }

  // Components: "global", "policy", "local" (one cube), "classifier" (one step).
  CostLedger ledger() const;
  Madds local_cost_on(const Shape& input) const;
  Madds glance_cost() const;
  Madds policy_cost() const;
  Madds local_cube_cost() const;
  Madds classifier_cost() const;
};

enum class ParamGroup { global, policy, local, classifier };

struct ParameterSet {
  std::vector<std::string> names;
  std::vector<Tensor> values;
  std::vector<ParamGroup> groups;

  std::size_t index(std::string_view name) const;
  const Tensor& get(std::string_view name) const { return values[index(name)]; }
  Tensor& get(std::string_view name) { return values[index(name)]; }
  std::size_t scalar_count(ParamGroup group) const;
};

class Model {
 public:
  Model(Architecture arch, std::uint64_t seed);
  Model(Architecture arch, ParameterSet params);

  const Architecture& arch() const { return arch_; }
  const ParameterSet& params() const { return params_; }
  ParameterSet& params() { return params_; }

  // Checkpoint: "ACKP", u32 version, u32 length + config text, u32 count,
  // then (u32 length + name, raw tensor) per parameter.
  void save(const std::filesystem::path& path, const Config& config) const;
  struct Loaded;
  static Loaded load(const std::filesystem::path& path);

 private:
  Architecture arch_;
  ParameterSet params_;
};

struct Model::Loaded {
  Model model;
  Config config;
};

// 2x spatial average pooling, the glance step's input.
Tensor downscale_for_glance(const Tensor& video);

struct ForwardOptions {
  enum class Path { test, train };
  Path path = Path::test;
  GradientMode mode = GradientMode::featuregrad;
  PolicyKind policy = PolicyKind::learned;
  // Stream for random cube centres (random policy variants).
  std::uint64_t random_stream = 0;
  // Parameter groups that receive gradients (train path only).
  std::array<bool, 4> trainable{true, true, true, true};
  // Feature-estimator geometry.
  double anchor_shift = 0.5;
  Coord3 offset_shift{0.5, 0.5, 0.5};
};

struct ForwardResult {
  std::vector<ad::Var> logits;  // t = 0..K
  std::vector<CubeSpec> cubes;  // K entries
  ad::Var global_features;
  ad::Var loss;                 // valid when a label was supplied
  std::vector<ad::Var> param_vars;
};

// Builds the full glance + K-cube computation on `g`. With a label the loss
// is the sum of the K + 1 cross-entropy terms.
ForwardResult forward(ad::Graph& g, const Model& model, const Tensor& video, const ForwardOptions& opt,
                      std::optional<std::size_t> label = {});

// Scalar training loss node, sum over t = 0..K of CE(p_t, label).
ad::Var training_loss(ad::Graph& g, const Model& model, const Tensor& video, std::size_t label,
                      GradientMode mode);

// Uniformly drawn lattice-aligned cube centre.
Coord3 random_center(const CubeSize& cube, const Shape& video, std::uint64_t stream, std::size_t cube_index);

struct PredictionTrace {
  std::vector<Tensor> probs;             // p_0 .. p_t
  std::vector<Madds> cumulative_cost;    // after each step
  std::vector<CubeSpec> cube_specs;      // planned cubes
};

struct GlanceResult {
  Tensor global_features;
  Tensor p0;
};

// Stepwise test-time inference on one video. Steps must run in order:
// glance(), plan_cubes(), then step(1) .. step(K).
class InferenceSession {
 public:
  InferenceSession(const Model& model, const Tensor& video, PolicyKind policy = PolicyKind::learned,
                   std::uint64_t random_stream = 0);

  const GlanceResult& glance();
  const std::vector<CubeSpec>& plan_cubes();
  const Tensor& step(std::size_t t);
  const PredictionTrace& trace() const { return trace_; }
  // Runs every remaining step.
  const PredictionTrace& run();

 private:
  Tensor classify(const std::vector<double>& pooled_local) const;

  const Model& model_;
  const Tensor& video_;
  PolicyKind policy_;
  std::uint64_t random_stream_;
  std::optional<GlanceResult> glance_;
  Tensor pooled_global_;
  std::vector<double> accumulated_;
  std::set<std::size_t> processed_frames_;
  std::size_t next_step_ = 0;
  bool planned_ = false;
  PredictionTrace trace_;
};

// Free-function forms of the inference components.
GlanceResult glance(const Model& model, const Tensor& video);
std::vector<CubeSpec> plan_cubes(const Model& model, const Tensor& global_features);

}  // namespace cubefocus
