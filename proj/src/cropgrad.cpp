#include "cubefocus/cropgrad.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace cubefocus {

namespace {

struct AxisWeights {
  std::size_t i0 = 0;
  std::size_t i1 = 0;
  double frac = 0.0;
  bool differentiable = false;
};

AxisWeights axis_weights(double x, std::size_t n) {
  if (n == 1) return {};
  AxisWeights a;
  const double hi = static_cast<double>(n - 1);
  a.differentiable = x >= 0.0 && x <= hi;
  x = std::clamp(x, 0.0, hi);
  a.i0 = std::min(static_cast<std::size_t>(std::floor(x)), n - 2);
  a.i1 = a.i0 + 1;
  a.frac = x - static_cast<double>(a.i0);
  return a;
}

void require_volume(const Tensor& v, const char* what) {
  if (v.rank() != 4) {
    throw std::invalid_argument(std::string(what) + " expects an HxWxTxC volume, got " +
                                shape_string(v.shape));
  }
}

double round_half_up(double x) { return std::floor(x + 0.5); }

}  // namespace

Coord3 center_lower_bound(const CubeSize& size) {
  return {size.h / 2.0, size.w / 2.0, size.t / 2.0};
}

Coord3 center_upper_bound(const CubeSize& size, const Shape& video) {
  return {video[0] - size.h / 2.0, video[1] - size.w / 2.0, video[2] - size.t / 2.0};
}

void validate_cube(const CubeSpec& spec, const Shape& video) {
  if (video.size() != 4) throw std::invalid_argument("cube applied to non-volume " + shape_string(video));
  const Coord3 lo = center_lower_bound(spec.size);
  const Coord3 hi = center_upper_bound(spec.size, video);
  for (std::size_t a = 0; a < 3; ++a) {
    if (spec.size[a] < 1 || spec.size[a] > video[a]) {
      throw std::invalid_argument("cube extent " + std::to_string(spec.size[a]) + " on axis " +
                                  std::to_string(a) + " does not fit video " + shape_string(video));
    }
    if (!(spec.center[a] >= lo[a] && spec.center[a] <= hi[a])) {
      throw std::invalid_argument("cube centre " + std::to_string(spec.center[a]) + " on axis " +
                                  std::to_string(a) + " outside [" + std::to_string(lo[a]) + ", " +
                                  std::to_string(hi[a]) + "]");
    }
  }
}

void trilinear_sample(const Tensor& volume, const Coord3& coords, std::span<double> out) {
  const auto& s = volume.shape;
  const AxisWeights ah = axis_weights(coords[0], s[0]);
  const AxisWeights aw = axis_weights(coords[1], s[1]);
  const AxisWeights at = axis_weights(coords[2], s[2]);
  const std::size_t hs[2] = {ah.i0, ah.i1};
  const std::size_t ws[2] = {aw.i0, aw.i1};
  const std::size_t ts[2] = {at.i0, at.i1};
  const double wh[2] = {1.0 - ah.frac, ah.frac};
  const double ww[2] = {1.0 - aw.frac, aw.frac};
  const double wt[2] = {1.0 - at.frac, at.frac};
  std::fill(out.begin(), out.end(), 0.0);
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b)
      for (int c = 0; c < 2; ++c) {
        const double weight = wh[a] * ww[b] * wt[c];
        if (weight == 0.0) continue;
        const double* px = &volume.at(hs[a], ws[b], ts[c], 0);
        for (std::size_t ch = 0; ch < out.size(); ++ch) out[ch] += weight * px[ch];
      }
}

double trilinear_sample(const Tensor& volume, const Coord3& coords, std::size_t channel) {
  std::vector<double> all(volume.shape[3]);
  trilinear_sample(volume, coords, all);
  return all.at(channel);
}

void trilinear_coord_grad(const Tensor& volume, const Coord3& coords,
                          std::span<const double> upstream, Coord3& acc) {
  const auto& s = volume.shape;
  const AxisWeights ax[3] = {axis_weights(coords[0], s[0]), axis_weights(coords[1], s[1]),
                             axis_weights(coords[2], s[2])};
  const std::size_t channels = s[3];
  double dot[2][2][2];
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b)
      for (int c = 0; c < 2; ++c) {
        const double* px = &volume.at(a ? ax[0].i1 : ax[0].i0, b ? ax[1].i1 : ax[1].i0, c ? ax[2].i1 : ax[2].i0, 0);
        double d = 0.0;
        for (std::size_t ch = 0; ch < channels; ++ch) d += upstream[ch] * px[ch];
        dot[a][b][c] = d;
      }
  // Differences taken before weighting so a flat field gives exactly zero.
  auto wt = [&](int axis, int bit) { return bit ? ax[axis].frac : 1.0 - ax[axis].frac; };
  for (int x = 0; x < 2; ++x)
    for (int y = 0; y < 2; ++y) {
      if (ax[0].differentiable) acc[0] += wt(1, x) * wt(2, y) * (dot[1][x][y] - dot[0][x][y]);
      if (ax[1].differentiable) acc[1] += wt(0, x) * wt(2, y) * (dot[x][1][y] - dot[x][0][y]);
      if (ax[2].differentiable) acc[2] += wt(0, x) * wt(1, y) * (dot[x][y][1] - dot[x][y][0]);
    }
}

void trilinear_scatter(Tensor& volume_grad, const Coord3& coords, std::span<const double> upstream) {
  const auto& s = volume_grad.shape;
  const AxisWeights ah = axis_weights(coords[0], s[0]);
  const AxisWeights aw = axis_weights(coords[1], s[1]);
  const AxisWeights at = axis_weights(coords[2], s[2]);
  const std::size_t hs[2] = {ah.i0, ah.i1};
  const std::size_t ws[2] = {aw.i0, aw.i1};
  const std::size_t ts[2] = {at.i0, at.i1};
  const double wh[2] = {1.0 - ah.frac, ah.frac};
  const double ww[2] = {1.0 - aw.frac, aw.frac};
  const double wt[2] = {1.0 - at.frac, at.frac};
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b)
      for (int c = 0; c < 2; ++c) {
        const double weight = wh[a] * ww[b] * wt[c];
        if (weight == 0.0) continue;
        double* px = &volume_grad.at(hs[a], ws[b], ts[c], 0);
        for (std::size_t ch = 0; ch < upstream.size(); ++ch) px[ch] += weight * upstream[ch];
      }
}

namespace {

Coord3 voxel_coords(const CubeSpec& spec, std::size_t i, std::size_t j, std::size_t k) {
  return {spec.center[0] - spec.size.h / 2.0 + static_cast<double>(i),
          spec.center[1] - spec.size.w / 2.0 + static_cast<double>(j),
          spec.center[2] - spec.size.t / 2.0 + static_cast<double>(k)};
}

}  // namespace

Tensor crop_cube(const Tensor& video, const CubeSpec& spec) {
  require_volume(video, "crop_cube");
  validate_cube(spec, video.shape);
  const std::size_t channels = video.shape[3];
  Tensor out(Shape{spec.size.h, spec.size.w, spec.size.t, channels});
  for (std::size_t i = 0; i < spec.size.h; ++i)
    for (std::size_t j = 0; j < spec.size.w; ++j)
      for (std::size_t k = 0; k < spec.size.t; ++k) {
        trilinear_sample(video, voxel_coords(spec, i, j, k),
                         std::span<double>(&out.at(i, j, k, 0), channels));
      }
  return out;
}

std::array<std::size_t, 3> direct_origin(const CubeSpec& spec, const Shape& video) {
  std::array<std::size_t, 3> origin{};
  for (std::size_t a = 0; a < 3; ++a) {
    const double start = round_half_up(spec.center[a] - spec.size[a] / 2.0);
    const double hi = static_cast<double>(video[a] - spec.size[a]);
    origin[a] = static_cast<std::size_t>(std::clamp(start, 0.0, hi));
  }
  return origin;
}

Tensor crop_direct(const Tensor& video, const CubeSpec& spec) {
  require_volume(video, "crop_direct");
  validate_cube(spec, video.shape);
  const auto o = direct_origin(spec, video.shape);
  const std::size_t channels = video.shape[3];
  Tensor out(Shape{spec.size.h, spec.size.w, spec.size.t, channels});
  for (std::size_t i = 0; i < spec.size.h; ++i)
    for (std::size_t j = 0; j < spec.size.w; ++j)
      for (std::size_t k = 0; k < spec.size.t; ++k) {
        const double* src = &video.at(o[0] + i, o[1] + j, o[2] + k, 0);
        std::copy(src, src + channels, &out.at(i, j, k, 0));
      }
  return out;
}

ad::Var crop_cube_pixelgrad(ad::Graph& g, const Tensor& video, ad::Var center, const CubeSize& size) {
  const Tensor& c = g.value(center);
  if (c.size() != 3) throw std::invalid_argument("cube centre must be a 3-vector, got " + shape_string(c.shape));
  const CubeSpec spec{{c[0], c[1], c[2]}, size};
  Tensor out = crop_cube(video, spec);
  const Tensor* vp = &video;
  return g.record(std::move(out), {center}, [vp, center, spec](ad::Graph& gr, int self) {
    if (!gr.requires_grad(center)) return;
    const Tensor& go = gr.grad_mut(self);
    const std::size_t channels = go.shape[3];
    Coord3 acc{0.0, 0.0, 0.0};
    // Voxel coordinates move one-for-one with the centre, so each voxel's
    // coordinate sensitivity is also its centre sensitivity.
    for (std::size_t i = 0; i < spec.size.h; ++i)
      for (std::size_t j = 0; j < spec.size.w; ++j)
        for (std::size_t k = 0; k < spec.size.t; ++k) {
          trilinear_coord_grad(*vp, voxel_coords(spec, i, j, k),
                               std::span<const double>(&go.at(i, j, k, 0), channels), acc);
        }
    Tensor& gc = gr.grad_mut(center);
    for (std::size_t a = 0; a < 3; ++a) gc[a] += acc[a];
  });
}

std::array<Tensor, 3> center_sensitivity(const Tensor& video, const CubeSpec& spec) {
  require_volume(video, "center_sensitivity");
  validate_cube(spec, video.shape);
  const auto& vs = video.shape;
  const std::size_t channels = vs[3];
  std::array<Tensor, 3> result;
  for (std::size_t axis = 0; axis < 3; ++axis) {
    Tensor& out = result[axis];
    out = Tensor(Shape{spec.size.h, spec.size.w, spec.size.t, channels});
    if (vs[axis] < 2) continue;
    // Forward-difference field along `axis`, one cell shorter on that axis.
    Shape ds = vs;
    ds[axis] -= 1;
    Tensor diff(ds);
    for (std::size_t h = 0; h < ds[0]; ++h)
      for (std::size_t w = 0; w < ds[1]; ++w)
        for (std::size_t t = 0; t < ds[2]; ++t)
          for (std::size_t ch = 0; ch < channels; ++ch) {
            std::array<std::size_t, 3> next{h, w, t};
            next[axis] += 1;
            diff.at(h, w, t, ch) = video.at(next[0], next[1], next[2], ch) - video.at(h, w, t, ch);
          }
    const double hi = static_cast<double>(vs[axis] - 1);
    for (std::size_t i = 0; i < spec.size.h; ++i)
      for (std::size_t j = 0; j < spec.size.w; ++j)
        for (std::size_t k = 0; k < spec.size.t; ++k) {
          Coord3 p = voxel_coords(spec, i, j, k);
          if (p[axis] < 0.0 || p[axis] > hi) continue;
          // The sample is piecewise linear along `axis`: its slope is the
          // difference of the enclosing cell, interpolated across the others.
          p[axis] = std::min(std::floor(p[axis]), hi - 1.0);
          trilinear_sample(diff, p, std::span<double>(&out.at(i, j, k, 0), channels));
        }
  }
  return result;
}

std::array<bool, 3> interpolated_axes(const CubeSize& size) { return {true, true, size.t > 1}; }

std::array<std::size_t, 3> enlarged_origin(const CubeSpec& spec, const Shape& video,
                                           const Stride3& stride, double anchor_shift) {
  const auto interp = interpolated_axes(spec.size);
  std::array<std::size_t, 3> origin{};
  for (std::size_t a = 0; a < 3; ++a) {
    const std::size_t grow = interp[a] ? stride[a] : 0;
    const std::size_t extent = spec.size[a] + grow;
    if (extent > video[a]) {
      throw std::invalid_argument("enlarged cube extent " + std::to_string(extent) + " on axis " +
                                  std::to_string(a) + " needs a video of at least that size, got " +
                                  shape_string(video));
    }
    const double start =
        round_half_up(spec.center[a] - spec.size[a] / 2.0 - anchor_shift * static_cast<double>(grow));
    origin[a] = static_cast<std::size_t>(std::clamp(start, 0.0, static_cast<double>(video[a] - extent)));
  }
  return origin;
}

Tensor crop_enlarged_cube(const Tensor& video, const CubeSpec& spec, const Stride3& stride,
                          double anchor_shift) {
  require_volume(video, "crop_enlarged_cube");
  const auto o = enlarged_origin(spec, video.shape, stride, anchor_shift);
  const auto interp = interpolated_axes(spec.size);
  std::array<std::size_t, 3> ext{};
  for (std::size_t a = 0; a < 3; ++a) ext[a] = spec.size[a] + (interp[a] ? stride[a] : 0);
  const std::size_t channels = video.shape[3];
  Tensor out(Shape{ext[0], ext[1], ext[2], channels});
  for (std::size_t i = 0; i < ext[0]; ++i)
    for (std::size_t j = 0; j < ext[1]; ++j)
      for (std::size_t k = 0; k < ext[2]; ++k) {
        const double* src = &video.at(o[0] + i, o[1] + j, o[2] + k, 0);
        std::copy(src, src + channels, &out.at(i, j, k, 0));
      }
  return out;
}

Coord3 FeatureOffsetGrid::offset(std::size_t i, std::size_t j, std::size_t k) const {
  const std::size_t idx[3] = {i, j, k};
  Coord3 o{};
  for (std::size_t a = 0; a < 3; ++a) {
    o[a] = static_cast<double>(idx[a]) + (interpolate[a] ? shift[a] : 0.0);
  }
  return o;
}

std::array<std::size_t, 3> FeatureOffsetGrid::source_extent() const {
  std::array<std::size_t, 3> e{};
  for (std::size_t a = 0; a < 3; ++a) e[a] = target[a] + (interpolate[a] ? 1 : 0);
  return e;
}

ad::Var sample_at_offsets(ad::Graph& g, ad::Var volume, ad::Var shift,
                          const FeatureOffsetGrid& offsets) {
  const Tensor& src = g.value(volume);
  require_volume(src, "sample_at_offsets");
  const auto need = offsets.source_extent();
  for (std::size_t a = 0; a < 3; ++a) {
    if (src.shape[a] != need[a]) {
      throw std::invalid_argument("feature map " + shape_string(src.shape) +
                                  " does not match offset grid source extent on axis " +
                                  std::to_string(a) + " (need " + std::to_string(need[a]) + ")");
    }
  }
  const Tensor& sv = g.value(shift);
  if (sv.size() != 3) throw std::invalid_argument("shift must be a 3-vector");
  const Coord3 delta{offsets.interpolate[0] ? sv[0] : 0.0, offsets.interpolate[1] ? sv[1] : 0.0,
                     offsets.interpolate[2] ? sv[2] : 0.0};
  const auto& tg = offsets.target;
  const std::size_t channels = src.shape[3];
  Tensor out(Shape{tg[0], tg[1], tg[2], channels});
  for (std::size_t i = 0; i < tg[0]; ++i)
    for (std::size_t j = 0; j < tg[1]; ++j)
      for (std::size_t k = 0; k < tg[2]; ++k) {
        Coord3 p = offsets.offset(i, j, k);
        for (std::size_t a = 0; a < 3; ++a) p[a] += delta[a];
        trilinear_sample(src, p, std::span<double>(&out.at(i, j, k, 0), channels));
      }
  return g.record(std::move(out), {volume, shift},
                  [volume, shift, offsets, delta](ad::Graph& gr, int self) {
                    const Tensor& go = gr.grad_mut(self);
                    const Tensor& srcv = gr.value(volume);
                    const auto& t = offsets.target;
                    const std::size_t ch = go.shape[3];
                    Tensor* gv = gr.requires_grad(volume) ? &gr.grad_mut(volume) : nullptr;
                    Coord3 acc{0.0, 0.0, 0.0};
                    for (std::size_t i = 0; i < t[0]; ++i)
                      for (std::size_t j = 0; j < t[1]; ++j)
                        for (std::size_t k = 0; k < t[2]; ++k) {
                          Coord3 p = offsets.offset(i, j, k);
                          for (std::size_t a = 0; a < 3; ++a) p[a] += delta[a];
                          std::span<const double> up(&go.at(i, j, k, 0), ch);
                          if (gv) trilinear_scatter(*gv, p, up);
                          trilinear_coord_grad(srcv, p, up, acc);
                        }
                    if (gr.requires_grad(shift)) {
                      Tensor& gs = gr.grad_mut(shift);
                      for (std::size_t a = 0; a < 3; ++a)
                        if (offsets.interpolate[a]) gs[a] += acc[a];
                    }
                  });
}

ad::Var feature_center_interp(ad::Graph& g, ad::Var enlarged, ad::Var center,
                              const FeatureOffsetGrid& offsets, const Coord3& cell_size) {
  if (g.value(center).size() != 3) throw std::invalid_argument("cube centre must be a 3-vector");
  // center - StopGradient(center) is exactly zero in value but carries d/d(center).
  ad::Var delta = ad::sub(g, center, ad::stop_gradient(g, center));
  const Tensor per_cell = Tensor::vector({1.0 / cell_size[0], 1.0 / cell_size[1], 1.0 / cell_size[2]});
  ad::Var shift = ad::affine(g, delta, per_cell, Tensor(Shape{3}));
  return sample_at_offsets(g, enlarged, shift, offsets);
}

}  // namespace cubefocus
