#include "cadbench/scoring.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include "cadbench/distance.hpp"
#include "cadbench/error.hpp"
#include "cadbench/parallel.hpp"

namespace cadbench {

Neighborhood neighborhood(Cell center, std::size_t radius, std::size_t grid_h, std::size_t grid_w) {
  if (center.row >= grid_h || center.col >= grid_w) throw Error("cell outside grid");
  Neighborhood n{center, radius, {}};
  const std::size_t r0 = center.row > radius ? center.row - radius : 0;
  const std::size_t c0 = center.col > radius ? center.col - radius : 0;
  const std::size_t r1 = std::min(grid_h - 1, center.row + radius);
  const std::size_t c1 = std::min(grid_w - 1, center.col + radius);
  n.cells.reserve((r1 - r0 + 1) * (c1 - c0 + 1));
  for (std::size_t r = r0; r <= r1; ++r) {
    for (std::size_t c = c0; c <= c1; ++c) n.cells.push_back({r, c});
  }
  return n;
}

const char* to_string(Decision d) { return d == Decision::anomalous ? "anomalous" : "normal"; }

std::size_t route(std::span<const float> cls, const BankRegistry& registry) {
  if (registry.empty()) throw Error("empty registry");
  if (cls.size() != registry.shape().dim) throw Error("shape mismatch");
  std::size_t best = 0;
  double best_dist = std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t < registry.size(); ++t) {
    const double d = squared_l2(cls.data(), registry[t].prototype().data(), cls.size());
    if (d < best_dist) {
      best_dist = d;
      best = t;
    }
  }
  return best;
}

ScoreReport score_image(const FeatureGrid& grid, const TaskMemoryBank& bank, std::size_t radius) {
  if (grid.shape != bank.shape()) {
    throw Error("shape mismatch: image " + to_string(grid.shape) + ", bank " + to_string(bank.shape()));
  }
  if (grid.patches.size() != grid.shape.patch_floats()) throw Error("shape mismatch");
  const std::size_t h = grid.shape.grid_h;
  const std::size_t w = grid.shape.grid_w;
  const std::size_t dim = grid.shape.dim;
  const std::size_t m = bank.m();

  ScoreReport rep;
  rep.image_id = grid.image_id;
  rep.routed_task = bank.task_id();
  rep.shape = grid.shape;
  rep.patch_scores.resize(h * w);
  std::uint64_t comparisons = 0;

  for (std::size_t i = 0; i < h; ++i) {
    const std::size_t r0 = i > radius ? i - radius : 0;
    const std::size_t r1 = std::min(h - 1, i + radius);
    for (std::size_t j = 0; j < w; ++j) {
      const std::size_t c0 = j > radius ? j - radius : 0;
      const std::size_t c1 = std::min(w - 1, j + radius);
      const float* query = grid.patches.data() + (i * w + j) * dim;
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t r = r0; r <= r1; ++r) {
        for (std::size_t c = c0; c <= c1; ++c) {
          const float* vectors = bank.cell(r, c).data();
          for (std::size_t k = 0; k < m; ++k) {
            const double d = squared_l2(query, vectors + k * dim, dim);
            if (d < best) best = d;
          }
          comparisons += m;
        }
      }
      rep.patch_scores[i * w + j] = std::sqrt(best);
    }
  }

  const auto top = std::max_element(rep.patch_scores.begin(), rep.patch_scores.end());
  const std::size_t at = static_cast<std::size_t>(top - rep.patch_scores.begin());
  rep.image_score = *top;
  rep.argmax = {at / w, at % w};
  rep.comparisons = comparisons;
  return rep;
}

ScoreReport infer_with_task(const FeatureGrid& grid, const BankRegistry& registry, std::size_t task_index,
                            std::size_t radius) {
  const auto start = std::chrono::steady_clock::now();
  const TaskMemoryBank& bank = registry[task_index];
  ScoreReport rep = score_image(grid, bank, radius);
  rep.routed_index = task_index;
  rep.decision = rep.image_score > bank.threshold() ? Decision::anomalous : Decision::normal;
  rep.latency_ns = std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now() - start).count();
  return rep;
}

ScoreReport infer(const FeatureGrid& grid, const BankRegistry& registry, std::size_t radius) {
  const auto start = std::chrono::steady_clock::now();
  const std::size_t task = route(grid.cls, registry);
  ScoreReport rep = infer_with_task(grid, registry, task, radius);
  rep.latency_ns = std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now() - start).count();
  return rep;
}

std::vector<double> score_images(std::span<const FeatureGrid> grids, const TaskMemoryBank& bank, std::size_t radius,
                                 std::size_t workers) {
  std::vector<double> out(grids.size());
  parallel_for(grids.size(), workers, [&](std::size_t k) { out[k] = score_image(grids[k], bank, radius).image_score; });
  return out;
}

}  // namespace cadbench
