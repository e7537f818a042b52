#pragma once

// Differentiable extraction of video cubes.
//
// Coordinates are continuous lattice indices ordered (h, w, t): the value at
// integer coordinates (i, j, k) is the voxel video[i][j][k]. A cube of extent
// n centred at c along an axis covers [c - n/2, c + n/2] and its voxel i is
// sampled at c - n/2 + i, so valid centres lie in [n/2, N - n/2].

#include <array>
#include <cstddef>
#include <span>

#include "cubefocus/autodiff.hpp"
#include "cubefocus/kernels.hpp"
#include "cubefocus/tensor.hpp"

namespace cubefocus {

using Coord3 = std::array<double, 3>;

struct CubeSize {
  std::size_t h = 1;
  std::size_t w = 1;
  std::size_t t = 1;

  std::size_t operator[](std::size_t axis) const { return axis == 0 ? h : axis == 1 ? w : t; }
  std::size_t volume() const { return h * w * t; }
  friend bool operator==(const CubeSize&, const CubeSize&) = default;
};

struct CubeSpec {
  Coord3 center{};
  CubeSize size;
};

// Lowest / highest valid centre per axis for a cube inside `video`.
Coord3 center_lower_bound(const CubeSize& size);
Coord3 center_upper_bound(const CubeSize& size, const Shape& video);

// Throws std::invalid_argument when the cube does not fit or its centre is
// outside the valid range.
void validate_cube(const CubeSpec& spec, const Shape& video);

// Trilinear interpolation of every channel at `coords`. Coordinates are
// clamped to [0, extent - 1].
void trilinear_sample(const Tensor& volume, const Coord3& coords, std::span<double> out);
double trilinear_sample(const Tensor& volume, const Coord3& coords, std::size_t channel);

// Adds sum_c upstream[c] * d sample_c / d coords into `acc`. Clamped axes
// contribute zero.
void trilinear_coord_grad(const Tensor& volume, const Coord3& coords,
                          std::span<const double> upstream, Coord3& acc);

// Adds weight * upstream[c] into the eight neighbours (scatter of the sample).
void trilinear_scatter(Tensor& volume_grad, const Coord3& coords, std::span<const double> upstream);

// Sampled crop without a graph (pixel path forward).
Tensor crop_cube(const Tensor& video, const CubeSpec& spec);

// Test-time crop: origin rounded to the nearest lattice point, then sliced.
Tensor crop_direct(const Tensor& video, const CubeSpec& spec);
std::array<std::size_t, 3> direct_origin(const CubeSpec& spec, const Shape& video);

// Pixel-path crop. `center` is a 3-vector node; the backward rule sums the
// per-voxel coordinate sensitivities into the centre gradient.
ad::Var crop_cube_pixelgrad(ad::Graph& g, const Tensor& video, ad::Var center, const CubeSize& size);

// Independent route to d crop / d center_axis: samples the forward-difference
// field of the video instead of differentiating per-voxel weights. Returns
// one H' x W' x T' x C tensor per axis.
std::array<Tensor, 3> center_sensitivity(const Tensor& video, const CubeSpec& spec);

// Which axes the feature path interpolates. A single-frame cube keeps its
// temporal axis on the nearest frame.
std::array<bool, 3> interpolated_axes(const CubeSize& size);

// Larger cube for the feature-based estimator. Each interpolated axis grows
// by the encoder stride; the origin is rounded (no gradient flows here) and
// placed `anchor_shift` strides before the cube origin.
Tensor crop_enlarged_cube(const Tensor& video, const CubeSpec& spec, const Stride3& stride,
                          double anchor_shift = 0.5);
std::array<std::size_t, 3> enlarged_origin(const CubeSpec& spec, const Shape& video,
                                           const Stride3& stride, double anchor_shift = 0.5);

// Fixed sampling positions into the enlarged feature map: cell (i, j, k) of
// the target map sits at (i + shift_h, j + shift_w, k + shift_t) on
// interpolated axes and at its own index elsewhere.
struct FeatureOffsetGrid {
  std::array<std::size_t, 3> target{};
  Coord3 shift{0.5, 0.5, 0.5};
  std::array<bool, 3> interpolate{true, true, true};

  Coord3 offset(std::size_t i, std::size_t j, std::size_t k) const;
  // Extents the enlarged feature map must have.
  std::array<std::size_t, 3> source_extent() const;
};

// Feature-space estimator: samples `enlarged` at
//   offset + (center - StopGradient(center)) / cell_size
// so the forward value never depends on the centre while d/d(center) follows
// the feature map. `cell_size` is the encoder stride in pixels per axis.
ad::Var feature_center_interp(ad::Graph& g, ad::Var enlarged, ad::Var center,
                              const FeatureOffsetGrid& offsets, const Coord3& cell_size);

// Samples `volume` at offset(i,j,k) + shift (the generic op underneath the
// estimator); differentiable in both the volume and the 3-vector shift.
ad::Var sample_at_offsets(ad::Graph& g, ad::Var volume, ad::Var shift,
                          const FeatureOffsetGrid& offsets);

}  // namespace cubefocus
