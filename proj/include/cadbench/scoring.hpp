#pragma once

// Inference: prototype routing, neighborhood-restricted patch scoring and
// threshold decisions against a TaskMemoryBank.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cadbench/featstore.hpp"
#include "cadbench/membank.hpp"

namespace cadbench {

struct Cell {
  std::size_t row = 0;
  std::size_t col = 0;
  bool operator==(const Cell&) const = default;
};

// Cells within Chebyshev distance `radius` of `center`, clipped to the grid,
// in row-major order.
struct Neighborhood {
  Cell center;
  std::size_t radius = 0;
  std::vector<Cell> cells;
};

Neighborhood neighborhood(Cell center, std::size_t radius, std::size_t grid_h, std::size_t grid_w);

enum class Decision : std::uint8_t { normal, anomalous };
const char* to_string(Decision d);

struct ScoreReport {
  std::string image_id;
  std::string routed_task;
  std::size_t routed_index = 0;
  GridShape shape;
  std::vector<double> patch_scores;  // [grid_h][grid_w], true L2
  double image_score = 0.0;          // max of patch_scores
  Cell argmax;                       // first cell (row-major) attaining image_score
  Decision decision = Decision::normal;
  std::int64_t latency_ns = 0;
  std::uint64_t comparisons = 0;     // distance evaluations performed
};

// Index of the bank whose prototype is nearest to `cls`; earliest wins ties.
std::size_t route(std::span<const float> cls, const BankRegistry& registry);

// Patch scores only (no routing, no decision). Sets patch_scores, image_score,
// argmax and comparisons.
ScoreReport score_image(const FeatureGrid& grid, const TaskMemoryBank& bank, std::size_t radius);

// Route by prototype, score against the routed bank, apply its threshold.
ScoreReport infer(const FeatureGrid& grid, const BankRegistry& registry, std::size_t radius);

// Oracle routing: score against registry[task_index] without consulting prototypes.
ScoreReport infer_with_task(const FeatureGrid& grid, const BankRegistry& registry, std::size_t task_index,
                            std::size_t radius);

// Image scores of every grid against `bank`, parallel over images.
std::vector<double> score_images(std::span<const FeatureGrid> grids, const TaskMemoryBank& bank, std::size_t radius,
                                 std::size_t workers);

}  // namespace cadbench
