#pragma once

// PatchCore-style comparator: one global greedy coreset over every patch of
// the current task plus a replay buffer, scored by unrestricted nearest
// neighbour search with the 3-NN re-weighting of the image score.

#include <cstddef>
#include <span>
#include <vector>

#include "cadbench/featstore.hpp"
#include "cadbench/scoring.hpp"

namespace cadbench {

struct FlatBankConfig {
  double ratio = 0.05;
  std::size_t min_size = 500;
  std::size_t replay_per_task = 100;
  std::size_t reweight_neighbors = 3;
};

// max(min_size, floor(pool * ratio)), capped at pool.
std::size_t flat_coreset_size(std::size_t pool, const FlatBankConfig& config);

// First `replay_per_task` training images of every task seen so far.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t per_task = 100) : per_task_(per_task) {}
  void add_task(const TaskDataset& train);
  const std::vector<FeatureGrid>& images() const { return images_; }
  std::size_t size() const { return images_.size(); }

 private:
  std::size_t per_task_;
  std::vector<FeatureGrid> images_;
};

class FlatBank {
 public:
  FlatBank(GridShape shape, std::vector<float> vectors, double threshold, FlatBankConfig config = {});

  // Fits on `current` plus `replay`. The threshold is the 97.5th percentile
  // of the re-weighted image scores of those same training images.
  static FlatBank fit(const TaskDataset& current, std::span<const FeatureGrid> replay, const FlatBankConfig& config,
                      std::size_t workers = 0);

  const GridShape& shape() const { return shape_; }
  std::size_t size() const { return vectors_.size() / shape_.dim; }
  std::span<const float> vectors() const { return vectors_; }
  double threshold() const { return threshold_; }

  // patch_scores are raw nearest-neighbour distances; image_score is the
  // maximal patch score re-weighted by the softmax over the distances from
  // that patch to the k nearest bank neighbours of its match.
  ScoreReport score(const FeatureGrid& grid) const;

 private:
  GridShape shape_;
  std::vector<float> vectors_;
  double threshold_;
  FlatBankConfig config_;
};

}  // namespace cadbench
