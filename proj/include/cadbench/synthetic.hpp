#pragma once

// Deterministic synthetic feature generator used as a ground-truth oracle.
//
// Per task t (stream SplitMix64::derive(seed, {t})), draws happen in this
// fixed order:
//   1. base vectors b[i][j] ~ N(0, 1)^dim, row-major over cells
//   2. each train image: cls noise (dim draws), then patch noise row-major
//   3. each normal test image: same as train
//   4. each anomalous test image: cls + patch noise as above, then the
//      anomalous cell index (one draw), then a direction (dim draws) that is
//      normalised and scaled to length anomaly_delta
// Task centre mu_t = t * task_separation * e_0, so adjacent tasks are exactly
// task_separation apart. Values are computed in double and rounded to float
// once, as float(b + sigma * z).

#include <cstdint>
#include <optional>
#include <vector>

#include "cadbench/featstore.hpp"

namespace cadbench {

struct SyntheticSpec {
  std::uint64_t seed = 1;
  std::size_t n_train = 20;
  std::size_t n_test_normal = 10;
  std::size_t n_test_anomalous = 10;
  GridShape shape{4, 4, 8};
  double cluster_spread = 0.1;    // sigma_c
  double anomaly_delta = 1.0;     // delta; 0 allowed (anomalies identical in law to normals)
  std::size_t n_tasks = 1;
  double task_separation = 1.0;   // Delta

  void validate() const;
};

struct SyntheticCell {
  std::size_t row = 0;
  std::size_t col = 0;
  bool operator==(const SyntheticCell&) const = default;
};

struct SyntheticTask {
  TaskDataset train;
  TaskDataset test;
  // Parallel to test.features: the perturbed cell for anomalous images.
  std::vector<std::optional<SyntheticCell>> anomaly_cells;
  std::vector<float> center;
};

std::vector<SyntheticTask> generate_synthetic(const SyntheticSpec& spec);

}  // namespace cadbench
