#pragma once

// Tape-based reverse-mode differentiation over Tensor values.
//
// Nodes are appended in evaluation order, so the tape is already a
// topological order and backward() is a single reverse sweep. A Graph is
// meant for one sample's computation; parameters are referenced, not
// copied, and must outlive the graph.

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "cubefocus/kernels.hpp"
#include "cubefocus/tensor.hpp"

namespace cubefocus::ad {

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

class Graph;

// Called once during backward with the node's own id; reads grad(self) and
// accumulates into the gradients of the node's inputs.
using BackwardFn = std::function<void(Graph&, int self)>;

class Graph {
 public:
  Var constant(Tensor value);
  // Refers to a tensor owned elsewhere (videos, frozen parameters).
  Var constant_ref(const Tensor& value);
  Var leaf(Tensor value);
  // Like constant_ref (no copy; `value` must outlive the graph) but receives a gradient.
  Var parameter(const Tensor& value);

  // Appends an op node. requires_grad is inherited from the inputs; the
  // backward rule is dropped when no input needs a gradient. Throws
  // std::domain_error if the value contains NaN or Inf.
  Var record(Tensor value, std::vector<Var> inputs, BackwardFn backward);

  const Tensor& value(Var v) const;
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }
  std::span<const Var> inputs(Var v) const { return nodes_.at(v.id).inputs; }

  // Gradient buffer for v, zero-initialized with v's shape on first use.
  Tensor& grad_mut(Var v);
  Tensor& grad_mut(int id) { return grad_mut(Var{id}); }
  const Tensor& grad(Var v);

  // Seeds d(root)/d(root) = 1 and sweeps the tape once. root must be scalar.
  void backward(Var root);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor owned;
    const Tensor* ref = nullptr;
    Tensor grad;
    bool has_grad = false;
    bool requires_grad = false;
    std::vector<Var> inputs;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

// Elementwise and reshaping ops.
Var add(Graph& g, Var a, Var b);
Var sub(Graph& g, Var a, Var b);
Var scale(Graph& g, Var a, double factor);
Var sum(Graph& g, Var a);
Var reshape(Graph& g, Var a, Shape shape);
Var slice(Graph& g, Var a, std::size_t offset, std::size_t length);
Var concat(Graph& g, std::span<const Var> parts);
Var maximum(Graph& g, Var a, Var b);
Var relu(Graph& g, Var a);
Var sigmoid(Graph& g, Var a);
// y = shift + factor * x, elementwise with constant vectors.
Var affine(Graph& g, Var x, const Tensor& factor, const Tensor& shift);
// Identity forward, zero backward.
Var stop_gradient(Graph& g, Var a);

// Dense layers.
Var linear(Graph& g, Var input, Var weights, Var bias);
Var conv3d(Graph& g, Var input, Var kernels, const Stride3& stride);
// Adds a per-channel bias to a channels-last tensor.
Var bias_add(Graph& g, Var input, Var bias);
// H x W x T x C -> C.
Var global_average_pool(Graph& g, Var input);

// -log softmax(logits)[label], computed with the max-shift; scalar node.
Var softmax_cross_entropy(Graph& g, Var logits, std::size_t label);

Tensor softmax(const Tensor& logits);

}  // namespace cubefocus::ad
