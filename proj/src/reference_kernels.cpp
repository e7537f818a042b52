#include "cubefocus/kernels.hpp"

namespace cubefocus::reference {

void conv3d_forward(const Tensor& input, const Tensor& kernels, const Stride3& stride, Tensor& out) {
  out = Tensor(conv3d_output_shape(input.shape, kernels.shape, stride));
  const auto& k = kernels.shape;
  for (std::size_t y = 0; y < out.shape[0]; ++y)
    for (std::size_t x = 0; x < out.shape[1]; ++x)
      for (std::size_t z = 0; z < out.shape[2]; ++z)
        for (std::size_t co = 0; co < k[4]; ++co) {
          double acc = 0.0;
          for (std::size_t a = 0; a < k[0]; ++a)
            for (std::size_t b = 0; b < k[1]; ++b)
              for (std::size_t c = 0; c < k[2]; ++c)
                for (std::size_t ci = 0; ci < k[3]; ++ci) {
                  const std::size_t kidx = (((a * k[1] + b) * k[2] + c) * k[3] + ci) * k[4] + co;
                  acc += input.at(y * stride[0] + a, x * stride[1] + b, z * stride[2] + c, ci) *
                         kernels[kidx];
                }
          out.at(y, x, z, co) = acc;
        }
}

void conv3d_backward_input(const Tensor& kernels, const Stride3& stride, const Tensor& gout,
                           Tensor& ginput) {
  const auto& k = kernels.shape;
  for (std::size_t y = 0; y < gout.shape[0]; ++y)
    for (std::size_t x = 0; x < gout.shape[1]; ++x)
      for (std::size_t z = 0; z < gout.shape[2]; ++z)
        for (std::size_t co = 0; co < k[4]; ++co)
          for (std::size_t a = 0; a < k[0]; ++a)
            for (std::size_t b = 0; b < k[1]; ++b)
              for (std::size_t c = 0; c < k[2]; ++c)
                for (std::size_t ci = 0; ci < k[3]; ++ci) {
                  const std::size_t kidx = (((a * k[1] + b) * k[2] + c) * k[3] + ci) * k[4] + co;
                  ginput.at(y * stride[0] + a, x * stride[1] + b, z * stride[2] + c, ci) +=
                      kernels[kidx] * gout.at(y, x, z, co);
                }
}

void conv3d_backward_kernels(const Tensor& input, const Stride3& stride, const Tensor& gout,
                             Tensor& gkernels) {
  const auto& k = gkernels.shape;
  for (std::size_t y = 0; y < gout.shape[0]; ++y)
    for (std::size_t x = 0; x < gout.shape[1]; ++x)
      for (std::size_t z = 0; z < gout.shape[2]; ++z)
        for (std::size_t co = 0; co < k[4]; ++co)
          for (std::size_t a = 0; a < k[0]; ++a)
            for (std::size_t b = 0; b < k[1]; ++b)
              for (std::size_t c = 0; c < k[2]; ++c)
                for (std::size_t ci = 0; ci < k[3]; ++ci) {
                  const std::size_t kidx = (((a * k[1] + b) * k[2] + c) * k[3] + ci) * k[4] + co;
                  gkernels[kidx] +=
                      input.at(y * stride[0] + a, x * stride[1] + b, z * stride[2] + c, ci) *
                      gout.at(y, x, z, co);
                }
}

}  // namespace cubefocus::reference
