#include "cubefocus/kernels.hpp"

#include <stdexcept>
#include <string>

namespace cubefocus {

Shape conv3d_output_shape(const Shape& input, const Shape& kernels, const Stride3& stride) {
  if (input.size() != 4 || kernels.size() != 5) {
    throw std::invalid_argument("conv3d expects input HxWxTxCin and kernels kxkxktxCinxCout, got " +
                                shape_string(input) + " and " + shape_string(kernels));
  }
  if (input[3] != kernels[3]) {
    throw std::invalid_argument("conv3d channel mismatch: input " + shape_string(input) +
                                " vs kernels " + shape_string(kernels));
  }
  Shape out(4);
  for (std::size_t a = 0; a < 3; ++a) {
    if (stride[a] == 0) throw std::invalid_argument("conv3d stride must be positive");
    if (kernels[a] == 0 || kernels[a] > input[a]) {
      throw std::invalid_argument("conv3d non-positive output extent: input " + shape_string(input) +
                                  " vs kernels " + shape_string(kernels));
    }
    out[a] = (input[a] - kernels[a]) / stride[a] + 1;
  }
  out[3] = kernels[4];
  return out;
}

namespace kernels {

void linear_forward(const Tensor& x, const Tensor& w, const Tensor& b, Tensor& y) {
  const std::size_t m = w.shape[0];
  const std::size_t n = w.shape[1];
  y = Tensor(Shape{m});
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = w.data.data() + i * n;
    double acc = b[i];
    for (std::size_t j = 0; j < n; ++j) acc += row[j] * x[j];
    y[i] = acc;
  }
}

void linear_backward(const Tensor& x, const Tensor& w, const Tensor& gy, Tensor* gx, Tensor* gw,
                     Tensor* gb) {
  const std::size_t m = w.shape[0];
  const std::size_t n = w.shape[1];
  for (std::size_t i = 0; i < m; ++i) {
    const double g = gy[i];
    if (g == 0.0) continue;
    const double* row = w.data.data() + i * n;
    if (gx) {
      for (std::size_t j = 0; j < n; ++j) (*gx)[j] += g * row[j];
    }
    if (gw) {
      double* grow = gw->data.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) grow[j] += g * x[j];
    }
    if (gb) (*gb)[i] += g;
  }
}

namespace {

struct ConvGeometry {
  std::size_t ih, iw, it, cin;
  std::size_t kh, kw, kt, cout;
  std::size_t oh, ow, ot;
  std::size_t sh, sw, st;

  ConvGeometry(const Shape& in, const Shape& k, const Shape& out, const Stride3& s)
      : ih(in[0]), iw(in[1]), it(in[2]), cin(in[3]),
        kh(k[0]), kw(k[1]), kt(k[2]), cout(k[4]),
        oh(out[0]), ow(out[1]), ot(out[2]),
        sh(s[0]), sw(s[1]), st(s[2]) {}

  std::size_t in_index(std::size_t h, std::size_t w, std::size_t t) const {
    return ((h * iw + w) * it + t) * cin;
  }
  std::size_t out_index(std::size_t h, std::size_t w, std::size_t t) const {
    return ((h * ow + w) * ot + t) * cout;
  }
  std::size_t k_index(std::size_t a, std::size_t b, std::size_t c) const {
    return ((a * kw + b) * kt + c) * cin * cout;
  }
};

}  // namespace

void conv3d_forward(const Tensor& input, const Tensor& kernels, const Stride3& stride, Tensor& out) {
  out = Tensor(conv3d_output_shape(input.shape, kernels.shape, stride));
  const ConvGeometry g(input.shape, kernels.shape, out.shape, stride);
  const double* in = input.data.data();
  const double* ker = kernels.data.data();
  double* o = out.data.data();

#pragma omp parallel for schedule(static)
  for (std::size_t y = 0; y < g.oh; ++y) {
    for (std::size_t x = 0; x < g.ow; ++x) {
      for (std::size_t z = 0; z < g.ot; ++z) {
        double* acc = o + g.out_index(y, x, z);
        for (std::size_t a = 0; a < g.kh; ++a) {
          for (std::size_t b = 0; b < g.kw; ++b) {
            for (std::size_t c = 0; c < g.kt; ++c) {
              const double* px = in + g.in_index(y * g.sh + a, x * g.sw + b, z * g.st + c);
              const double* kp = ker + g.k_index(a, b, c);
              for (std::size_t ci = 0; ci < g.cin; ++ci) {
                const double v = px[ci];
                const double* krow = kp + ci * g.cout;
                for (std::size_t co = 0; co < g.cout; ++co) acc[co] += v * krow[co];
              }
            }
          }
        }
      }
    }
  }
}

void conv3d_backward_input(const Tensor& kernels, const Stride3& stride, const Tensor& gout,
                           Tensor& ginput) {
  const ConvGeometry g(ginput.shape, kernels.shape, gout.shape, stride);
  const double* ker = kernels.data.data();
  const double* go = gout.data.data();
  double* gi = ginput.data.data();

  // Each thread owns a set of input rows, so the scatter is race-free.
#pragma omp parallel for schedule(static)
  for (std::size_t ih = 0; ih < g.ih; ++ih) {
    for (std::size_t y = 0; y < g.oh; ++y) {
      if (ih < y * g.sh || ih >= y * g.sh + g.kh) continue;
      const std::size_t a = ih - y * g.sh;
      for (std::size_t x = 0; x < g.ow; ++x) {
        for (std::size_t z = 0; z < g.ot; ++z) {
          const double* grad = go + g.out_index(y, x, z);
          for (std::size_t b = 0; b < g.kw; ++b) {
            for (std::size_t c = 0; c < g.kt; ++c) {
              double* dst = gi + g.in_index(ih, x * g.sw + b, z * g.st + c);
              const double* kp = ker + g.k_index(a, b, c);
              for (std::size_t ci = 0; ci < g.cin; ++ci) {
                const double* krow = kp + ci * g.cout;
                double acc = 0.0;
                for (std::size_t co = 0; co < g.cout; ++co) acc += krow[co] * grad[co];
                dst[ci] += acc;
              }
            }
          }
        }
      }
    }
  }
}

void conv3d_backward_kernels(const Tensor& input, const Stride3& stride, const Tensor& gout,
                             Tensor& gkernels) {
  const ConvGeometry g(input.shape, gkernels.shape, gout.shape, stride);
  const double* in = input.data.data();
  const double* go = gout.data.data();
  double* gk = gkernels.data.data();

  // Parallel over the leading kernel axis: each thread writes a disjoint slab.
#pragma omp parallel for schedule(static)
  for (std::size_t a = 0; a < g.kh; ++a) {
    for (std::size_t y = 0; y < g.oh; ++y) {
      for (std::size_t x = 0; x < g.ow; ++x) {
        for (std::size_t z = 0; z < g.ot; ++z) {
          const double* grad = go + g.out_index(y, x, z);
          for (std::size_t b = 0; b < g.kw; ++b) {
            for (std::size_t c = 0; c < g.kt; ++c) {
              const double* px = in + g.in_index(y * g.sh + a, x * g.sw + b, z * g.st + c);
              double* kp = gk + g.k_index(a, b, c);
              for (std::size_t ci = 0; ci < g.cin; ++ci) {
                const double v = px[ci];
                double* krow = kp + ci * g.cout;
                for (std::size_t co = 0; co < g.cout; ++co) krow[co] += v * grad[co];
              }
            }
          }
        }
      }
    }
  }
}

}  // namespace kernels
}  // namespace cubefocus
