#include "support/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace oracle {

Tensor random_tensor(Shape shape, Rng& rng, double lo, double hi) {
  Tensor t(std::move(shape));
  for (double& v : t.data) v = lo + (hi - lo) * uniform01(rng);
  return t;
}

double brute_trilinear(const Tensor& volume, const Coord3& x, std::size_t channel) {
  Coord3 c;
  for (std::size_t a = 0; a < 3; ++a) {
    c[a] = std::clamp(x[a], 0.0, static_cast<double>(volume.shape[a] - 1));
  }
  double value = 0.0;
  for (std::size_t i = 0; i < volume.shape[0]; ++i)
    for (std::size_t j = 0; j < volume.shape[1]; ++j)
      for (std::size_t k = 0; k < volume.shape[2]; ++k) {
        const double w = std::max(0.0, 1.0 - std::abs(c[0] - static_cast<double>(i))) *
                         std::max(0.0, 1.0 - std::abs(c[1] - static_cast<double>(j))) *
                         std::max(0.0, 1.0 - std::abs(c[2] - static_cast<double>(k)));
        if (w > 0.0) value += w * volume.at(i, j, k, channel);
      }
  return value;
}

Tensor brute_crop(const Tensor& video, const CubeSpec& spec) {
  const std::size_t ch = video.shape[3];
  Tensor out(Shape{spec.size.h, spec.size.w, spec.size.t, ch});
  for (std::size_t i = 0; i < spec.size.h; ++i)
    for (std::size_t j = 0; j < spec.size.w; ++j)
      for (std::size_t k = 0; k < spec.size.t; ++k) {
        const Coord3 x{spec.center[0] - spec.size.h / 2.0 + static_cast<double>(i),
                       spec.center[1] - spec.size.w / 2.0 + static_cast<double>(j),
                       spec.center[2] - spec.size.t / 2.0 + static_cast<double>(k)};
        for (std::size_t c = 0; c < ch; ++c) out.at(i, j, k, c) = brute_trilinear(video, x, c);
      }
  return out;
}

Tensor subarray(const Tensor& video, std::array<std::size_t, 3> origin, const CubeSize& size) {
  const std::size_t ch = video.shape[3];
  Tensor out(Shape{size.h, size.w, size.t, ch});
  for (std::size_t i = 0; i < size.h; ++i)
    for (std::size_t j = 0; j < size.w; ++j)
      for (std::size_t k = 0; k < size.t; ++k)
        for (std::size_t c = 0; c < ch; ++c)
          out.at(i, j, k, c) = video.at(origin[0] + i, origin[1] + j, origin[2] + k, c);
  return out;
}

double central_difference(const std::function<double(double)>& f, double x, double h) {
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

namespace {

double quantile_sorted(const std::vector<double>& sorted, double level) {
  const double pos = level * static_cast<double>(sorted.size() - 1);
  return sorted[static_cast<std::size_t>(std::llround(pos))];
}

}  // namespace

GridOracleResult grid_oracle(const ExitRecords& records, double budget, std::size_t levels) {
  for (const auto& r : records)
    if (r.steps.size() != 3) throw std::invalid_argument("grid oracle handles K = 2 only");
  std::vector<double> e0, e1;
  for (const auto& r : records) {
    e0.push_back(r.steps[0].entropy);
    e1.push_back(r.steps[1].entropy);
  }
  std::sort(e0.begin(), e0.end());
  std::sort(e1.begin(), e1.end());

  GridOracleResult best;
  best.accuracy = -1.0;
  const double n = static_cast<double>(records.size());
  for (std::size_t a = 0; a < levels; ++a) {
    const double eta0 = quantile_sorted(e0, static_cast<double>(a) / static_cast<double>(levels - 1));
    for (std::size_t b = 0; b < levels; ++b) {
      const double eta1 = quantile_sorted(e1, static_cast<double>(b) / static_cast<double>(levels - 1));
      std::size_t correct = 0;
      std::uint64_t cost = 0;
      for (const auto& r : records) {
        std::size_t t = 2;
        if (r.steps[0].entropy <= eta0) {
          t = 0;
        } else if (r.steps[1].entropy <= eta1) {
          t = 1;
        }
        correct += r.steps[t].correct;
        cost += r.steps[t].cumulative_madds;
      }
      const double acc = static_cast<double>(correct) / n;
      const double mean = static_cast<double>(cost) / n;
      if (mean <= budget && (acc > best.accuracy || (acc == best.accuracy && mean < best.mean_cost))) {
        best = {acc, mean, eta0, eta1};
      }
    }
  }
  return best;
}

std::size_t template_match(const AnnotatedSample& sample, const std::vector<Tensor>& glyphs) {
  const CubeSpec& truth = sample.truth;
  const std::size_t g = glyphs.front().shape[0];
  const auto top = static_cast<std::size_t>(std::llround(truth.center[0] - truth.size.h / 2.0));
  const auto left = static_cast<std::size_t>(std::llround(truth.center[1] - truth.size.w / 2.0));
  const auto first = static_cast<std::size_t>(std::llround(truth.center[2] - truth.size.t / 2.0));
  std::vector<double> score(glyphs.size(), 0.0);
  for (std::size_t f = first; f < first + truth.size.t; ++f) {
    for (std::size_t c = 0; c < glyphs.size(); ++c) {
      double best = -std::numeric_limits<double>::infinity();
      for (std::size_t dh = 0; dh + g <= truth.size.h; ++dh)
        for (std::size_t dw = 0; dw + g <= truth.size.w; ++dw) {
          double dot = 0.0;
          for (std::size_t i = 0; i < g; ++i)
            for (std::size_t j = 0; j < g; ++j)
              dot += glyphs[c][i * g + j] * sample.video.at(top + dh + i, left + dw + j, f, 0);
          best = std::max(best, dot);
        }
      score[c] += best;
    }
  }
  return static_cast<std::size_t>(std::max_element(score.begin(), score.end()) - score.begin());
}

}  // namespace oracle
