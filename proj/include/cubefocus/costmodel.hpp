#pragma once

// Theoretical multiply-add accounting.

#include <cstdint>
#include <iosfwd>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "cubefocus/cropgrad.hpp"
#include "cubefocus/kernels.hpp"

namespace cubefocus {

using Madds = std::uint64_t;

enum class LayerKind { linear, conv3d, relu, pool };

LayerKind layer_kind_from_string(std::string_view name);
std::string_view to_string(LayerKind kind);

struct LayerDesc {
  std::string name;
  LayerKind kind = LayerKind::linear;
  // linear: in/out features. conv3d: input H x W x T x Cin, kernels kh x kw x kt x Cin x Cout.
  std::size_t in_features = 0;
  std::size_t out_features = 0;
  Shape input;
  Shape kernels;
  Stride3 stride{1, 1, 1};
};

// linear m x n -> m*n; conv -> output voxels * kernel volume * Cin * Cout;
// relu and pooling -> 0.
Madds count_layer(const LayerDesc& layer);

struct LedgerEntry {
  std::string component;
  std::string layer;
  Madds madds = 0;
};

class CostLedger {
 public:
  void add(std::string component, const LayerDesc& layer);
  Madds total(std::string_view component) const;
  Madds total() const;
  const std::vector<LedgerEntry>& entries() const { return entries_; }
  // CSV with header component,layer,madds
  void write_csv(std::ostream& out) const;

 private:
  std::vector<LedgerEntry> entries_;
};

// Local-encoder cost of one cube, discounted by the share of its frames that
// earlier cubes already covered. Integer arithmetic: full * new / total.
Madds cube_cost(const CubeSpec& spec, const Shape& video, const std::set<std::size_t>& processed_frames,
                Madds full_cube_cost);

// Frames [first, first + T') touched by the test-time crop of `spec`.
std::vector<std::size_t> cube_frames(const CubeSpec& spec, const Shape& video);

}  // namespace cubefocus
