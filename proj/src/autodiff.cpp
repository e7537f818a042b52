#include "cubefocus/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace cubefocus::ad {

Var Graph::constant(Tensor value) { return record(std::move(value), {}, nullptr); }

Var Graph::constant_ref(const Tensor& value) {
  Node n;
  n.ref = &value;
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Graph::leaf(Tensor value) {
  Var v = record(std::move(value), {}, nullptr);
  nodes_.back().requires_grad = true;
  return v;
}

Var Graph::parameter(const Tensor& value) {
  Var v = constant_ref(value);
  nodes_.back().requires_grad = true;
  return v;
}

Var Graph::record(Tensor value, std::vector<Var> inputs, BackwardFn backward) {
  if (!value.all_finite()) {
    throw std::domain_error("non-finite value produced at tape position " +
                            std::to_string(nodes_.size()));
  }
  Node n;
  n.owned = std::move(value);
  n.requires_grad = std::any_of(inputs.begin(), inputs.end(),
                                [&](Var in) { return nodes_.at(in.id).requires_grad; });
  if (n.requires_grad) n.backward = std::move(backward);
  n.inputs = std::move(inputs);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

const Tensor& Graph::value(Var v) const {
  const Node& n = nodes_.at(v.id);
  return n.ref ? *n.ref : n.owned;
}

Tensor& Graph::grad_mut(Var v) {
  Node& n = nodes_.at(v.id);
  if (!n.has_grad) {
    n.grad = Tensor(value(v).shape);
    n.has_grad = true;
  }
  return n.grad;
}

const Tensor& Graph::grad(Var v) { return grad_mut(v); }

void Graph::backward(Var root) {
  if (backward_done_) throw std::logic_error("backward already ran on this graph");
  if (value(root).size() != 1) {
    throw std::invalid_argument("backward root must be scalar, got " +
                                shape_string(value(root).shape));
  }
  backward_done_ = true;
  grad_mut(root)[0] = 1.0;
  for (int id = root.id; id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.has_grad || !n.backward) continue;
    n.backward(*this, id);
  }
}

namespace {

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape != b.shape) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_string(a.shape) +
                                " vs " + shape_string(b.shape));
  }
}

// Adds factor * src into the gradient of v when v participates in backward.
void accumulate(Graph& g, Var v, const Tensor& src, double factor = 1.0) {
  if (!g.requires_grad(v)) return;
  Tensor& dst = g.grad_mut(v);
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += factor * src[i];
}

}  // namespace

Var add(Graph& g, Var a, Var b) {
  const Tensor& va = g.value(a);
  const Tensor& vb = g.value(b);
  check_same_shape(va, vb, "add");
  Tensor out = va;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += vb[i];
  return g.record(std::move(out), {a, b}, [a, b](Graph& gr, int self) {
    const Tensor& go = gr.grad_mut(self);
    accumulate(gr, a, go);
    accumulate(gr, b, go);
  });
}

Var sub(Graph& g, Var a, Var b) {
  const Tensor& va = g.value(a);
  const Tensor& vb = g.value(b);
  check_same_shape(va, vb, "sub");
  Tensor out = va;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= vb[i];
  return g.record(std::move(out), {a, b}, [a, b](Graph& gr, int self) {
    const Tensor& go = gr.grad_mut(self);
    accumulate(gr, a, go);
    accumulate(gr, b, go, -1.0);
  });
}

Var scale(Graph& g, Var a, double factor) {
  Tensor out = g.value(a);
  for (double& v : out.data) v *= factor;
  return g.record(std::move(out), {a}, [a, factor](Graph& gr, int self) {
    accumulate(gr, a, gr.grad_mut(self), factor);
  });
}

Var sum(Graph& g, Var a) {
  Tensor out = Tensor::scalar(g.value(a).sum());
  return g.record(std::move(out), {a}, [a](Graph& gr, int self) {
    if (!gr.requires_grad(a)) return;
    const double go = gr.grad_mut(self)[0];
    for (double& v : gr.grad_mut(a).data) v += go;
  });
}

Var reshape(Graph& g, Var a, Shape shape) {
  const Tensor& va = g.value(a);
  if (shape_volume(shape) != va.size()) {
    throw std::invalid_argument("reshape: cannot view " + shape_string(va.shape) + " as " +
                                shape_string(shape));
  }
  Tensor out(std::move(shape), va.data);
  return g.record(std::move(out), {a}, [a](Graph& gr, int self) {
    if (!gr.requires_grad(a)) return;
    const Tensor& go = gr.grad_mut(self);
    Tensor& ga = gr.grad_mut(a);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += go[i];
  });
}

Var slice(Graph& g, Var a, std::size_t offset, std::size_t length) {
  const Tensor& va = g.value(a);
  if (va.rank() != 1 || offset + length > va.size()) {
    throw std::invalid_argument("slice [" + std::to_string(offset) + ", +" +
                                std::to_string(length) + ") out of range for " +
                                shape_string(va.shape));
  }
  Tensor out(Shape{length},
             std::vector<double>(va.data.begin() + offset, va.data.begin() + offset + length));
  return g.record(std::move(out), {a}, [a, offset](Graph& gr, int self) {
    if (!gr.requires_grad(a)) return;
    const Tensor& go = gr.grad_mut(self);
    Tensor& ga = gr.grad_mut(a);
    for (std::size_t i = 0; i < go.size(); ++i) ga[offset + i] += go[i];
  });
}

Var concat(Graph& g, std::span<const Var> parts) {
  std::vector<double> values;
  std::vector<std::size_t> sizes;
  for (Var p : parts) {
    const Tensor& v = g.value(p);
    if (v.rank() != 1) throw std::invalid_argument("concat expects vectors, got " + shape_string(v.shape));
    values.insert(values.end(), v.data.begin(), v.data.end());
    sizes.push_back(v.size());
  }
  const std::size_t total = values.size();
  std::vector<Var> inputs(parts.begin(), parts.end());
  return g.record(Tensor(Shape{total}, std::move(values)), inputs,
                  [inputs, sizes](Graph& gr, int self) {
                    const Tensor& go = gr.grad_mut(self);
                    std::size_t offset = 0;
                    for (std::size_t k = 0; k < inputs.size(); ++k) {
                      if (gr.requires_grad(inputs[k])) {
                        Tensor& gp = gr.grad_mut(inputs[k]);
                        for (std::size_t i = 0; i < sizes[k]; ++i) gp[i] += go[offset + i];
                      }
                      offset += sizes[k];
                    }
                  });
}

Var maximum(Graph& g, Var a, Var b) {
  const Tensor& va = g.value(a);
  const Tensor& vb = g.value(b);
  check_same_shape(va, vb, "maximum");
  Tensor out = va;
  // Ties route the gradient to the first argument.
  std::vector<unsigned char> take_b(va.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    take_b[i] = vb[i] > va[i];
    if (take_b[i]) out[i] = vb[i];
  }
  return g.record(std::move(out), {a, b}, [a, b, take_b](Graph& gr, int self) {
    const Tensor& go = gr.grad_mut(self);
    if (gr.requires_grad(a)) {
      Tensor& ga = gr.grad_mut(a);
      for (std::size_t i = 0; i < go.size(); ++i)
        if (!take_b[i]) ga[i] += go[i];
    }
    if (gr.requires_grad(b)) {
      Tensor& gb = gr.grad_mut(b);
      for (std::size_t i = 0; i < go.size(); ++i)
        if (take_b[i]) gb[i] += go[i];
    }
  });
}

Var relu(Graph& g, Var a) {
  Tensor out = g.value(a);
  for (double& v : out.data) v = v > 0.0 ? v : 0.0;
  return g.record(std::move(out), {a}, [a](Graph& gr, int self) {
    if (!gr.requires_grad(a)) return;
    const Tensor& go = gr.grad_mut(self);
    const Tensor& y = gr.value(Var{self});
    Tensor& ga = gr.grad_mut(a);
    for (std::size_t i = 0; i < go.size(); ++i)
      if (y[i] > 0.0) ga[i] += go[i];
  });
}

Var sigmoid(Graph& g, Var a) {
  Tensor out = g.value(a);
  for (double& v : out.data) v = 1.0 / (1.0 + std::exp(-v));
  return g.record(std::move(out), {a}, [a](Graph& gr, int self) {
    if (!gr.requires_grad(a)) return;
    const Tensor& go = gr.grad_mut(self);
    const Tensor& y = gr.value(Var{self});
    Tensor& ga = gr.grad_mut(a);
    for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * y[i] * (1.0 - y[i]);
  });
}

Var affine(Graph& g, Var x, const Tensor& factor, const Tensor& shift) {
  const Tensor& vx = g.value(x);
  check_same_shape(vx, factor, "affine factor");
  check_same_shape(vx, shift, "affine shift");
  Tensor out = vx;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = shift[i] + factor[i] * vx[i];
  return g.record(std::move(out), {x}, [x, factor](Graph& gr, int self) {
    if (!gr.requires_grad(x)) return;
    const Tensor& go = gr.grad_mut(self);
    Tensor& gx = gr.grad_mut(x);
    for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i] * factor[i];
  });
}

Var stop_gradient(Graph& g, Var a) {
  // Recorded without inputs so nothing upstream sees a gradient.
  return g.constant(g.value(a));
}

Var linear(Graph& g, Var input, Var weights, Var bias) {
  const Tensor& x = g.value(input);
  const Tensor& w = g.value(weights);
  const Tensor& b = g.value(bias);
  if (w.rank() != 2 || x.rank() != 1 || b.rank() != 1 || w.shape[1] != x.size() ||
      w.shape[0] != b.size()) {
    throw std::invalid_argument("linear: weights " + shape_string(w.shape) + " incompatible with input " +
                                shape_string(x.shape) + " and bias " + shape_string(b.shape));
  }
  Tensor y;
  kernels::linear_forward(x, w, b, y);
  return g.record(std::move(y), {input, weights, bias},
                  [input, weights, bias](Graph& gr, int self) {
                    const Tensor& gy = gr.grad_mut(self);
                    Tensor* gx = gr.requires_grad(input) ? &gr.grad_mut(input) : nullptr;
                    Tensor* gw = gr.requires_grad(weights) ? &gr.grad_mut(weights) : nullptr;
                    Tensor* gb = gr.requires_grad(bias) ? &gr.grad_mut(bias) : nullptr;
                    kernels::linear_backward(gr.value(input), gr.value(weights), gy, gx, gw, gb);
                  });
}

Var conv3d(Graph& g, Var input, Var kernels, const Stride3& stride) {
  Tensor out;
  kernels::conv3d_forward(g.value(input), g.value(kernels), stride, out);
  return g.record(std::move(out), {input, kernels}, [input, kernels, stride](Graph& gr, int self) {
    const Tensor& go = gr.grad_mut(self);
    if (gr.requires_grad(input)) {
      kernels::conv3d_backward_input(gr.value(kernels), stride, go, gr.grad_mut(input));
    }
    if (gr.requires_grad(kernels)) {
      kernels::conv3d_backward_kernels(gr.value(input), stride, go, gr.grad_mut(kernels));
    }
  });
}

Var bias_add(Graph& g, Var input, Var bias) {
  const Tensor& x = g.value(input);
  const Tensor& b = g.value(bias);
  if (x.rank() == 0 || b.rank() != 1 || x.shape.back() != b.size()) {
    throw std::invalid_argument("bias_add: bias " + shape_string(b.shape) +
                                " does not match channels of " + shape_string(x.shape));
  }
  const std::size_t c = b.size();
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i % c];
  return g.record(std::move(out), {input, bias}, [input, bias, c](Graph& gr, int self) {
    const Tensor& go = gr.grad_mut(self);
    accumulate(gr, input, go);
    if (gr.requires_grad(bias)) {
      Tensor& gb = gr.grad_mut(bias);
      for (std::size_t i = 0; i < go.size(); ++i) gb[i % c] += go[i];
    }
  });
}

Var global_average_pool(Graph& g, Var input) {
  const Tensor& x = g.value(input);
  if (x.rank() != 4) throw std::invalid_argument("global_average_pool expects HxWxTxC, got " + shape_string(x.shape));
  const std::size_t c = x.shape[3];
  const std::size_t cells = x.size() / c;
  Tensor out(Shape{c});
  for (std::size_t i = 0; i < x.size(); ++i) out[i % c] += x[i];
  for (double& v : out.data) v /= static_cast<double>(cells);
  return g.record(std::move(out), {input}, [input, c, cells](Graph& gr, int self) {
    if (!gr.requires_grad(input)) return;
    const Tensor& go = gr.grad_mut(self);
    Tensor& gx = gr.grad_mut(input);
    const double inv = 1.0 / static_cast<double>(cells);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += go[i % c] * inv;
  });
}

Tensor softmax(const Tensor& logits) {
  Tensor p = logits;
  const double mx = *std::max_element(p.data.begin(), p.data.end());
  double z = 0.0;
  for (double& v : p.data) {
    v = std::exp(v - mx);
    z += v;
  }
  for (double& v : p.data) v /= z;
  return p;
}

Var softmax_cross_entropy(Graph& g, Var logits, std::size_t label) {
  const Tensor& x = g.value(logits);
  if (x.rank() != 1 || x.size() == 0) {
    throw std::invalid_argument("softmax_cross_entropy expects a logit vector, got " + shape_string(x.shape));
  }
  if (label >= x.size()) {
    throw std::out_of_range("label " + std::to_string(label) + " out of range for " +
                            std::to_string(x.size()) + " classes");
  }
  const double mx = *std::max_element(x.data.begin(), x.data.end());
  double z = 0.0;
  for (double v : x.data) z += std::exp(v - mx);
  const double loss = std::log(z) - (x[label] - mx);
  return g.record(Tensor::scalar(loss), {logits}, [logits, label](Graph& gr, int self) {
    if (!gr.requires_grad(logits)) return;
    const double go = gr.grad_mut(self)[0];
    const Tensor p = softmax(gr.value(logits));
    Tensor& gl = gr.grad_mut(logits);
    for (std::size_t i = 0; i < p.size(); ++i) gl[i] += go * (p[i] - (i == label ? 1.0 : 0.0));
  });
}

}  // namespace cubefocus::ad
