#pragma once

// Central finite-difference oracle for graph-built scalar functions. It only
// evaluates forward passes, so it stays independent of every backward rule.

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "cubefocus/autodiff.hpp"

namespace cubefocus {

using ScalarGraphFn = std::function<ad::Var(ad::Graph&, std::span<const ad::Var>)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t probes = 0;
};

// |a - b| / max(|a|, |b|, 1e-6)
double relative_error(double analytic, double numeric);

// Compares backward() against central differences at `probes` randomly drawn
// input elements (all elements when probes == 0).
GradCheckResult check_gradients(const ScalarGraphFn& fn, const std::vector<Tensor>& inputs,
                                std::size_t probes, std::uint64_t seed, double step = 1e-5);

}  // namespace cubefocus
