#pragma once

// Dense compute kernels. The OpenMP versions in kernels.cpp are used by the
// model; the serial versions in namespace `reference` exist for tests and the
// benchmark and must stay straightforward loops.

#include <array>
#include <cstddef>

#include "cubefocus/tensor.hpp"

namespace cubefocus {

using Stride3 = std::array<std::size_t, 3>;

// Output extents of a valid-padding 3-D convolution over H x W x T x Cin.
// Throws if any extent would be non-positive.
Shape conv3d_output_shape(const Shape& input, const Shape& kernels, const Stride3& stride);

namespace kernels {

// y[m] = W[m x n] x[n] + b[m]
void linear_forward(const Tensor& x, const Tensor& w, const Tensor& b, Tensor& y);
void linear_backward(const Tensor& x, const Tensor& w, const Tensor& gy, Tensor* gx, Tensor* gw,
                     Tensor* gb);

// Valid cross-correlation. input H x W x T x Cin, kernels kh x kw x kt x Cin x Cout.
// The backward kernels accumulate into pre-sized gradient tensors.
void conv3d_forward(const Tensor& input, const Tensor& kernels, const Stride3& stride, Tensor& out);
void conv3d_backward_input(const Tensor& kernels, const Stride3& stride, const Tensor& gout,
                           Tensor& ginput);
void conv3d_backward_kernels(const Tensor& input, const Stride3& stride, const Tensor& gout,
                             Tensor& gkernels);

}  // namespace kernels

namespace reference {

void conv3d_forward(const Tensor& input, const Tensor& kernels, const Stride3& stride, Tensor& out);
void conv3d_backward_input(const Tensor& kernels, const Stride3& stride, const Tensor& gout,
                           Tensor& ginput);
void conv3d_backward_kernels(const Tensor& input, const Stride3& stride, const Tensor& gout,
                             Tensor& gkernels);

}  // namespace reference
}  // namespace cubefocus
