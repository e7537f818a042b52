#include "cubefocus/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace cubefocus {

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
  return std::abs(analytic - numeric) / denom;
}

namespace {

double evaluate(const ScalarGraphFn& fn, const std::vector<Tensor>& inputs) {
  ad::Graph g;
  std::vector<ad::Var> leaves;
  for (const auto& t : inputs) leaves.push_back(g.leaf(t));
  return g.value(fn(g, leaves))[0];
}

}  // namespace

GradCheckResult check_gradients(const ScalarGraphFn& fn, const std::vector<Tensor>& inputs,
                                std::size_t probes, std::uint64_t seed, double step) {
  ad::Graph g;
  std::vector<ad::Var> leaves;
  for (const auto& t : inputs) leaves.push_back(g.leaf(t));
  g.backward(fn(g, leaves));

  std::vector<std::pair<std::size_t, std::size_t>> sites;
  if (probes == 0) {
    for (std::size_t k = 0; k < inputs.size(); ++k)
      for (std::size_t i = 0; i < inputs[k].size(); ++i) sites.emplace_back(k, i);
  } else {
    std::mt19937_64 rng(seed);
    std::vector<std::size_t> nonempty;
    for (std::size_t k = 0; k < inputs.size(); ++k)
      if (inputs[k].size()) nonempty.push_back(k);
    for (std::size_t p = 0; p < probes; ++p) {
      const std::size_t k = nonempty[rng() % nonempty.size()];
      sites.emplace_back(k, rng() % inputs[k].size());
    }
  }

  GradCheckResult result;
  std::vector<Tensor> probe = inputs;
  for (auto [k, i] : sites) {
    const double original = probe[k][i];
    probe[k][i] = original + step;
    const double up = evaluate(fn, probe);
    probe[k][i] = original - step;
    const double down = evaluate(fn, probe);
    probe[k][i] = original;
    const double numeric = (up - down) / (2.0 * step);
    const double analytic = g.grad(leaves[k])[i];
    result.max_rel_error = std::max(result.max_rel_error, relative_error(analytic, numeric));
    ++result.probes;
  }
  return result;
}

}  // namespace cubefocus
