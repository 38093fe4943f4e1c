#include "cadbench/flat_bank.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include "cadbench/distance.hpp"
#include "cadbench/error.hpp"
#include "cadbench/membank.hpp"
#include "cadbench/metrics.hpp"
#include "cadbench/parallel.hpp"

namespace cadbench {

std::size_t flat_coreset_size(std::size_t pool, const FlatBankConfig& config) {
  if (pool == 0) throw Error("empty bank");
  const auto scaled = static_cast<std::size_t>(std::floor(static_cast<double>(pool) * config.ratio + 1e-9));
  return std::min(pool, std::max(config.min_size, scaled));
}

void ReplayBuffer::add_task(const TaskDataset& train) {
  const std::size_t n = std::min(per_task_, train.features.size());
  images_.insert(images_.end(), train.features.begin(), train.features.begin() + static_cast<std::ptrdiff_t>(n));
}

FlatBank::FlatBank(GridShape shape, std::vector<float> vectors, double threshold, FlatBankConfig config)
    : shape_(shape), vectors_(std::move(vectors)), threshold_(threshold), config_(config) {
  if (shape_.dim == 0 || vectors_.empty() || vectors_.size() % shape_.dim != 0) throw Error("empty bank");
}

FlatBank FlatBank::fit(const TaskDataset& current, std::span<const FeatureGrid> replay, const FlatBankConfig& config,
                       std::size_t workers) {
  current.validate();
  const GridShape shape = current.shape();
  std::vector<const FeatureGrid*> images;
  for (const FeatureGrid& g : current.features) images.push_back(&g);
  for (const FeatureGrid& g : replay) {
    if (g.shape != shape) throw Error("shape mismatch");
    images.push_back(&g);
  }
  std::vector<float> pool;
  pool.reserve(images.size() * shape.patch_floats());
  for (const FeatureGrid* g : images) pool.insert(pool.end(), g->patches.begin(), g->patches.end());

  const std::size_t dim = shape.dim;
  const std::size_t target = flat_coreset_size(pool.size() / dim, config);
  const std::vector<std::size_t> picks = greedy_coreset_indices(pool, dim, target);
  std::vector<float> vectors;
  vectors.reserve(picks.size() * dim);
  for (std::size_t p : picks) vectors.insert(vectors.end(), pool.begin() + p * dim, pool.begin() + (p + 1) * dim);

  FlatBank draft(shape, std::move(vectors), 0.0, config);
  std::vector<double> train_scores(images.size());
  parallel_for(images.size(), workers ? workers : default_workers(),
               [&](std::size_t k) { train_scores[k] = draft.score(*images[k]).image_score; });
  draft.threshold_ = percentile(train_scores, kThresholdQuantile);
  return draft;
}

ScoreReport FlatBank::score(const FeatureGrid& grid) const {
  if (grid.shape != shape_) throw Error("shape mismatch");
  const auto start = std::chrono::steady_clock::now();
  const std::size_t dim = shape_.dim;
  const std::size_t n = size();
  const std::size_t cells = shape_.cells();
  auto entry = [&](std::size_t k) { return vectors_.data() + k * dim; };

  ScoreReport rep;
  rep.image_id = grid.image_id;
  rep.routed_task = "flat";
  rep.shape = shape_;
  rep.patch_scores.resize(cells);
  std::vector<std::size_t> match(cells);
  for (std::size_t c = 0; c < cells; ++c) {
    const float* q = grid.patches.data() + c * dim;
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_k = 0;
    for (std::size_t k = 0; k < n; ++k) {
      const double d = squared_l2(q, entry(k), dim);
      if (d < best) {
        best = d;
        best_k = k;
      }
    }
    rep.patch_scores[c] = std::sqrt(best);
    match[c] = best_k;
  }
  rep.comparisons = static_cast<std::uint64_t>(cells) * n;

  const auto top = std::max_element(rep.patch_scores.begin(), rep.patch_scores.end());
  const std::size_t at = static_cast<std::size_t>(top - rep.patch_scores.begin());
  rep.argmax = {at / shape_.grid_w, at % shape_.grid_w};
  const double raw = *top;

  // Support set: the match itself, then its nearest other bank entries.
  const std::size_t anchor = match[at];
  std::vector<std::pair<double, std::size_t>> others;
  others.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    if (k != anchor) others.emplace_back(squared_l2(entry(anchor), entry(k), dim), k);
  }
  const std::size_t extra = std::min(others.size(), config_.reweight_neighbors > 0 ? config_.reweight_neighbors - 1 : 0);
  std::partial_sort(others.begin(), others.begin() + static_cast<std::ptrdiff_t>(extra), others.end());
  std::vector<double> dist{raw};
  const float* q = grid.patches.data() + at * dim;
  for (std::size_t e = 0; e < extra; ++e) dist.push_back(std::sqrt(squared_l2(q, entry(others[e].second), dim)));
  const double peak = *std::max_element(dist.begin(), dist.end());
  double denom = 0.0;
  for (double d : dist) denom += std::exp(d - peak);
  const double weight = 1.0 - std::exp(raw - peak) / denom;
  rep.image_score = weight * raw;

  rep.decision = rep.image_score > threshold_ ? Decision::anomalous : Decision::normal;
  rep.latency_ns = std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now() - start).count();
  return rep;
}

}  // namespace cadbench
