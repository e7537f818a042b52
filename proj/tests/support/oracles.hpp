#pragma once

// Independent reference computations used only by tests. None of these call
// the library routine they are meant to check.

#include <cstdint>
#include <functional>
#include <vector>

#include "cubefocus/cropgrad.hpp"
#include "cubefocus/earlyexit.hpp"
#include "cubefocus/rng.hpp"
#include "cubefocus/synthdata.hpp"
#include "cubefocus/tensor.hpp"

namespace oracle {

using namespace cubefocus;

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0);

// Trilinear value as sum over every lattice point of prod_a max(0, 1 - |x_a - i_a|),
// with coordinates clamped to the volume first.
double brute_trilinear(const Tensor& volume, const Coord3& x, std::size_t channel);

// Cube sampled voxel by voxel with brute_trilinear.
Tensor brute_crop(const Tensor& video, const CubeSpec& spec);

// Plain sub-array copy starting at an integer origin.
Tensor subarray(const Tensor& video, std::array<std::size_t, 3> origin, const CubeSize& size);

// Central difference of a scalar function of one variable.
double central_difference(const std::function<double(double)>& f, double x, double h = 1e-5);

struct GridOracleResult {
  double accuracy = 0.0;
  double mean_cost = 0.0;
  double eta0 = 0.0;
  double eta1 = 0.0;
};

// Exhaustive search over a levels x levels grid of entropy thresholds (K = 2),
// each axis taking the per-stage entropy quantiles at i / (levels - 1).
// Returns the most accurate pair whose mean cost is <= budget.
GridOracleResult grid_oracle(const ExitRecords& records, double budget, std::size_t levels = 50);

// Classifies a noiseless sample by cropping its ground-truth cube and
// correlating every glyph placement inside it with each class glyph.
std::size_t template_match(const AnnotatedSample& sample, const std::vector<Tensor>& glyphs);

}  // namespace oracle
