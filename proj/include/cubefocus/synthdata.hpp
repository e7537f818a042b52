#pragma once

// Synthetic video benchmark. Each video holds one class-defining glyph that is
// visible only inside a short temporal window, plus Gaussian noise and
// class-uninformative distractor patterns. The glyph's space-time extent is
// recorded as the sample's ground-truth cube.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cubefocus/config.hpp"
#include "cubefocus/cropgrad.hpp"
#include "cubefocus/tensor.hpp"

namespace cubefocus {

enum class Trajectory { stationary, drift };

struct SynthConfig {
  std::size_t height = 64;
  std::size_t width = 64;
  std::size_t frames = 16;
  std::size_t glyph = 16;
  std::size_t classes = 10;
  Trajectory trajectory = Trajectory::stationary;
  std::size_t window = 6;
  double noise = 0.1;
  std::size_t distractors = 2;
  std::uint64_t seed = 0;

  void validate() const;
  static SynthConfig from_config(const Config& cfg, std::uint64_t seed);
  Shape video_shape() const { return {height, width, frames, 1}; }
};

struct SplitSizes {
  std::size_t train = 0;
  std::size_t val = 0;
  std::size_t test = 0;
  static SplitSizes from_config(const Config& cfg);
};

struct AnnotatedSample {
  std::size_t id = 0;
  Tensor video;
  std::size_t label = 0;
  CubeSpec truth;
};

using Dataset = std::vector<AnnotatedSample>;

struct DatasetSplits {
  Dataset train;
  Dataset val;
  Dataset test;
};

// Distinct glyph x glyph patterns, one per class, fixed by the seed.
std::vector<Tensor> class_glyphs(const SynthConfig& cfg);

// One sample of a split ("train", "val", "test"); depends only on
// (seed, split, index).
AnnotatedSample make_sample(const SynthConfig& cfg, const std::vector<Tensor>& glyphs,
                            const std::string& split, std::size_t index);

Dataset generate_split(const SynthConfig& cfg, const std::string& split, std::size_t count);
DatasetSplits generate(const SynthConfig& cfg, const SplitSizes& sizes);

// 3-D intersection over union of two axis-aligned cubes.
double policy_iou(const CubeSpec& a, const CubeSpec& b);

// Directory layout: <dir>/manifest.csv and <dir>/<split>/<id>.atsr.
void write_dataset(const std::filesystem::path& dir, const DatasetSplits& splits);
Dataset read_split(const std::filesystem::path& dir, const std::string& split);

}  // namespace cubefocus
