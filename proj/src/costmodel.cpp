#include "cubefocus/costmodel.hpp"

#include <ostream>
#include <stdexcept>

namespace cubefocus {

LayerKind layer_kind_from_string(std::string_view name) {
  if (name == "linear") return LayerKind::linear;
  if (name == "conv3d") return LayerKind::conv3d;
  if (name == "relu") return LayerKind::relu;
  if (name == "pool") return LayerKind::pool;
  throw std::invalid_argument("unknown layer kind '" + std::string(name) + "'");
}

std::string_view to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::linear: return "linear";
    case LayerKind::conv3d: return "conv3d";
    case LayerKind::relu: return "relu";
    case LayerKind::pool: return "pool";
  }
  throw std::invalid_argument("unknown layer kind " + std::to_string(static_cast<int>(kind)));
}

Madds count_layer(const LayerDesc& layer) {
  switch (layer.kind) {
    case LayerKind::linear:
      return static_cast<Madds>(layer.in_features) * layer.out_features;
    case LayerKind::conv3d: {
      const Shape out = conv3d_output_shape(layer.input, layer.kernels, layer.stride);
      const Madds voxels = static_cast<Madds>(out[0]) * out[1] * out[2];
      const Madds per_voxel = static_cast<Madds>(layer.kernels[0]) * layer.kernels[1] *
                              layer.kernels[2] * layer.kernels[3] * layer.kernels[4];
      return voxels * per_voxel;
    }
    case LayerKind::relu:
    case LayerKind::pool:
      return 0;
  }
  throw std::invalid_argument("unknown layer kind " + std::to_string(static_cast<int>(layer.kind)) +
                              " for layer '" + layer.name + "'");
}

void CostLedger::add(std::string component, const LayerDesc& layer) {
  entries_.push_back({std::move(component), layer.name, count_layer(layer)});
}

Madds CostLedger::total(std::string_view component) const {
  Madds sum = 0;
  for (const auto& e : entries_)
    if (e.component == component) sum += e.madds;
  return sum;
}

Madds CostLedger::total() const {
  Madds sum = 0;
  for (const auto& e : entries_) sum += e.madds;
  return sum;
}

void CostLedger::write_csv(std::ostream& out) const {
  out << "component,layer,madds\n";
  for (const auto& e : entries_) out << e.component << ',' << e.layer << ',' << e.madds << '\n';
}

std::vector<std::size_t> cube_frames(const CubeSpec& spec, const Shape& video) {
  const auto origin = direct_origin(spec, video);
  std::vector<std::size_t> frames;
  for (std::size_t k = 0; k < spec.size.t; ++k) frames.push_back(origin[2] + k);
  return frames;
}

Madds cube_cost(const CubeSpec& spec, const Shape& video, const std::set<std::size_t>& processed_frames,
                Madds full_cube_cost) {
  const auto frames = cube_frames(spec, video);
  Madds fresh = 0;
  for (std::size_t f : frames)
    if (!processed_frames.contains(f)) ++fresh;
  return full_cube_cost * fresh / frames.size();
}

}  // namespace cubefocus
